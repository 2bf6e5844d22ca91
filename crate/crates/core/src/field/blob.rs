//! Binary weight files.
//!
//! Layout (little endian): magic `GSNF`, `u32` version, architecture header
//! (`u32` frequencies, include-input flag, feature dim, hidden width, hidden
//! layers, color hidden width, mode; `f64` softplus beta), `u32` layer count
//! followed by `(u32 in, u32 out)` per layer, `u64` parameter count, then the
//! parameters as `f32`.

use std::io::{Read, Write};
use std::path::Path;

use super::encoding::PosEncoding;
use super::network::{FieldArch, FieldMode, FieldParams};
use crate::error::{Error, Result};
use crate::num::{cast, Real};

pub const MAGIC: &[u8; 4] = b"GSNF";
pub const VERSION: u32 = 1;

pub fn write_blob<T: Real>(params: &FieldParams<T>, mut w: impl Write) -> Result<()> {
    let a = params.arch();
    w.write_all(MAGIC)?;
    let header = [
        VERSION,
        a.encoding.num_frequencies as u32,
        a.encoding.include_input as u32,
        a.feature_dim as u32,
        a.hidden_width as u32,
        a.hidden_layers as u32,
        a.color_hidden as u32,
        match a.mode {
            FieldMode::Occupancy => 0,
            FieldMode::Density => 1,
        },
    ];
    for v in header {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&a.softplus_beta.to_le_bytes())?;
    let shapes = a.layer_shapes();
    w.write_all(&(shapes.len() as u32).to_le_bytes())?;
    for (i, o) in shapes {
        w.write_all(&(i as u32).to_le_bytes())?;
        w.write_all(&(o as u32).to_le_bytes())?;
    }
    w.write_all(&(params.num_params() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 * params.num_params());
    for &v in &params.data {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor {
    bytes: Vec<u8>,
    pos: usize,
}

impl Cursor {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let Some(s) = self.bytes.get(self.pos..end) else {
            return Err(Error::parse_byte(self.pos, format!("unexpected end of file reading {what}")));
        };
        let mut out = [0u8; N];
        out.copy_from_slice(s);
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }
}

pub fn read_blob<T: Real>(mut r: impl Read) -> Result<FieldParams<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes, pos: 0 };
    if &c.take::<4>("magic")? != MAGIC {
        return Err(Error::parse_byte(0, "not a field weight file (bad magic)"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::parse_byte(4, format!("unsupported weight file version {version}")));
    }
    let num_frequencies = c.u32("frequency count")? as usize;
    let include_input = c.u32("include-input flag")? != 0;
    let feature_dim = c.u32("feature dim")? as usize;
    let hidden_width = c.u32("hidden width")? as usize;
    let hidden_layers = c.u32("hidden layers")? as usize;
    let color_hidden = c.u32("color hidden width")? as usize;
    let mode_pos = c.pos;
    let mode = match c.u32("mode")? {
        0 => FieldMode::Occupancy,
        1 => FieldMode::Density,
        m => return Err(Error::parse_byte(mode_pos, format!("unknown field mode {m}"))),
    };
    let softplus_beta = f64::from_le_bytes(c.take::<8>("softplus beta")?);
    let arch = FieldArch {
        encoding: PosEncoding { num_frequencies, include_input },
        feature_dim,
        hidden_width,
        hidden_layers,
        color_hidden,
        softplus_beta,
        mode,
    };
    arch.validate()?;
    let shapes_pos = c.pos;
    let n_layers = c.u32("layer count")? as usize;
    let mut shapes = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        shapes.push((c.u32("layer inputs")? as usize, c.u32("layer outputs")? as usize));
    }
    if shapes != arch.layer_shapes() {
        return Err(Error::parse_byte(shapes_pos, "layer shapes do not match the architecture header"));
    }
    let count_pos = c.pos;
    let count = u64::from_le_bytes(c.take::<8>("parameter count")?) as usize;
    let mut params = FieldParams::zeros(arch)?;
    if count != params.num_params() {
        return Err(Error::parse_byte(
            count_pos,
            format!("parameter count {count} does not match architecture ({})", params.num_params()),
        ));
    }
    for v in params.data.iter_mut() {
        *v = cast(f32::from_le_bytes(c.take::<4>("parameters")?));
    }
    if c.pos != c.bytes.len() {
        return Err(Error::parse_byte(c.pos, "trailing bytes after parameters"));
    }
    Ok(params)
}

pub fn save_blob<T: Real>(params: &FieldParams<T>, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_blob(params, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_blob<T: Real>(path: &Path) -> Result<FieldParams<T>> {
    read_blob(std::io::BufReader::new(Error::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> FieldArch {
        FieldArch { hidden_width: 8, hidden_layers: 2, color_hidden: 4, ..FieldArch::default() }
    }

    #[test]
    fn roundtrip_is_exact_for_f32() {
        let p = FieldParams::<f32>::random(arch(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut buf = Vec::new();
        write_blob(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"GSNF");
        let back: FieldParams<f32> = read_blob(&buf[..]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = FieldParams::<f32>::random(arch(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut buf = Vec::new();
        write_blob(&p, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_blob::<f32>(&bad[..]).is_err());
        let truncated = &buf[..buf.len() - 3];
        match read_blob::<f32>(truncated) {
            Err(Error::Parse { location: "byte", offset, .. }) => assert_eq!(offset, buf.len() - 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_blob::<f32>(&extra[..]).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let r = load_blob::<f32>(Path::new("/nonexistent/weights.bin"));
        assert!(matches!(r, Err(Error::FileNotFound(_))));
    }
}
