//! PLY reading and writing.
//!
//! Files are written as `binary_little_endian` with double-precision
//! positions, optional `nx/ny/nz` (float), `red/green/blue` (uchar),
//! `conf_0..conf_3` (float) and `label` (uchar 0-3) vertex properties, and a
//! `vertex_indices` face list. The reader also accepts ASCII and big-endian
//! files and any scalar property types, ignoring unknown properties and
//! elements.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::mesh::{Label, TriMesh};
use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Clone, Debug)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<(Header, usize, usize)> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let mut bytes = 0usize;
    let mut next_line = |reader: &mut R, line: &mut String, line_no: &mut usize| -> Result<bool> {
        line.clear();
        let n = reader.read_line(line)?;
        *line_no += 1;
        bytes += n;
        Ok(n > 0)
    };

    if !next_line(reader, &mut line, &mut line_no)? || line.trim_end() != "ply" {
        return Err(Error::parse_line(1, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(reader, &mut line, &mut line_no)? {
            return Err(Error::parse_line(line_no, "unexpected end of header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match tokens.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some("binary_big_endian") => Format::BinaryBe,
                    other => {
                        return Err(Error::parse_line(line_no, format!("unknown format {other:?}")))
                    }
                });
            }
            Some("element") => {
                let (Some(name), Some(count)) = (tokens.get(1), tokens.get(2)) else {
                    return Err(Error::parse_line(line_no, "malformed element line"));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::parse_line(line_no, format!("bad element count {count:?}")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let Some(el) = elements.last_mut() else {
                    return Err(Error::parse_line(line_no, "property before any element"));
                };
                let bad = || Error::parse_line(line_no, "malformed property line");
                let kind_tok = *tokens.get(1).ok_or_else(bad)?;
                let (kind, name) = if kind_tok == "list" {
                    let count = tokens.get(2).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    let item = tokens.get(3).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    (PropKind::List { count, item }, tokens.get(4).ok_or_else(bad)?)
                } else {
                    let s = Scalar::parse(kind_tok).ok_or_else(|| {
                        Error::parse_line(line_no, format!("unknown property type {kind_tok:?}"))
                    })?;
                    (PropKind::Scalar(s), tokens.get(2).ok_or_else(bad)?)
                };
                el.props.push(Property { name: name.to_string(), kind });
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse_line(line_no, format!("unexpected header keyword {other:?}")))
            }
        }
    }
    let format = format.ok_or_else(|| Error::parse_line(line_no, "header has no format line"))?;
    Ok((Header { format, elements }, bytes, line_no))
}

/// Token source over the body in any of the three encodings.
struct Body<R> {
    reader: R,
    format: Format,
    offset: usize,
    line_no: usize,
    tokens: Vec<String>,
    cursor: usize,
}

impl<R: BufRead> Body<R> {
    fn read_scalar(&mut self, s: Scalar) -> Result<f64> {
        match self.format {
            Format::Ascii => {
                while self.cursor >= self.tokens.len() {
                    let mut line = String::new();
                    let n = self.reader.read_line(&mut line)?;
                    self.line_no += 1;
                    if n == 0 {
                        return Err(Error::parse_line(self.line_no, "unexpected end of file"));
                    }
                    self.tokens = line.split_whitespace().map(str::to_string).collect();
                    self.cursor = 0;
                }
                let tok = &self.tokens[self.cursor];
                self.cursor += 1;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse_line(self.line_no, format!("bad number {tok:?}")))
            }
            Format::BinaryLe | Format::BinaryBe => {
                let mut buf = [0u8; 8];
                let n = s.size();
                self.reader.read_exact(&mut buf[..n]).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        Error::parse_byte(self.offset, "unexpected end of file")
                    } else {
                        Error::Io(e)
                    }
                })?;
                self.offset += n;
                if self.format == Format::BinaryBe {
                    buf[..n].reverse();
                }
                let b = &buf;
                Ok(match s {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F64 => f64::from_le_bytes(*b),
                })
            }
        }
    }

    fn position(&self) -> (&'static str, usize) {
        match self.format {
            Format::Ascii => ("line", self.line_no),
            _ => ("byte", self.offset),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        let (location, offset) = self.position();
        Error::Parse { location, offset, message: message.into() }
    }
}

/// Reads a mesh and validates it.
pub fn read_ply<T: Real, R: Read>(input: R) -> Result<TriMesh<T>> {
    let mut reader = BufReader::new(input);
    let (header, header_bytes, header_lines) = parse_header(&mut reader)?;
    let mut body = Body {
        reader,
        format: header.format,
        offset: header_bytes,
        line_no: header_lines,
        tokens: Vec::new(),
        cursor: 0,
    };

    let mut mesh = TriMesh::<T>::default();
    let mut seen_vertex = false;
    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                seen_vertex = true;
                read_vertices(&mut body, el, &mut mesh)?;
            }
            "face" => read_faces(&mut body, el, &mut mesh)?,
            _ => skip_element(&mut body, el)?,
        }
    }
    if !seen_vertex {
        return Err(Error::parse_line(0, "file has no vertex element"));
    }
    mesh.validate()?;
    Ok(mesh)
}

fn skip_element<R: BufRead>(body: &mut Body<R>, el: &Element) -> Result<()> {
    for _ in 0..el.count {
        for p in &el.props {
            match p.kind {
                PropKind::Scalar(s) => {
                    body.read_scalar(s)?;
                }
                PropKind::List { count, item } => {
                    let n = body.read_scalar(count)? as usize;
                    for _ in 0..n {
                        body.read_scalar(item)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_vertices<T: Real, R: BufRead>(
    body: &mut Body<R>,
    el: &Element,
    mesh: &mut TriMesh<T>,
) -> Result<()> {
    let idx = |name: &str| el.props.iter().position(|p| p.name == name);
    let pos = [idx("x"), idx("y"), idx("z")];
    if pos.iter().any(Option::is_none) {
        return Err(body.err("vertex element lacks x/y/z"));
    }
    let normal = [idx("nx"), idx("ny"), idx("nz")];
    let color = [idx("red"), idx("green"), idx("blue")];
    let conf = [idx("conf_0"), idx("conf_1"), idx("conf_2"), idx("conf_3")];
    let label = idx("label");
    let has = |a: &[Option<usize>]| a.iter().all(Option::is_some);
    let partial = |a: &[Option<usize>]| a.iter().any(Option::is_some) && !has(a);
    if partial(&normal) || partial(&color) || partial(&conf) {
        return Err(body.err("vertex attribute group is incomplete"));
    }
    let color_is_float = color[0]
        .map(|i| matches!(el.props[i].kind, PropKind::Scalar(s) if s.is_float()))
        .unwrap_or(false);

    let n = el.count;
    mesh.vertices = Vec::with_capacity(n);
    let mut normals = has(&normal).then(|| Vec::with_capacity(n));
    let mut colors = has(&color).then(|| Vec::with_capacity(n));
    let mut confs = has(&conf).then(|| Vec::with_capacity(n));
    let mut labels = label.map(|_| Vec::with_capacity(n));

    let mut values = vec![0.0f64; el.props.len()];
    for _ in 0..n {
        for (k, p) in el.props.iter().enumerate() {
            values[k] = match p.kind {
                PropKind::Scalar(s) => body.read_scalar(s)?,
                PropKind::List { count, item } => {
                    let c = body.read_scalar(count)? as usize;
                    for _ in 0..c {
                        body.read_scalar(item)?;
                    }
                    0.0
                }
            };
        }
        let get = |i: Option<usize>| values[i.expect("checked above")];
        mesh.vertices.push(Vec3::new(T::lit(get(pos[0])), T::lit(get(pos[1])), T::lit(get(pos[2]))));
        if let Some(v) = normals.as_mut() {
            v.push(Vec3::new(T::lit(get(normal[0])), T::lit(get(normal[1])), T::lit(get(normal[2]))));
        }
        if let Some(v) = colors.as_mut() {
            let scale = if color_is_float { 1.0 } else { 1.0 / 255.0 };
            v.push([
                T::lit(get(color[0]) * scale),
                T::lit(get(color[1]) * scale),
                T::lit(get(color[2]) * scale),
            ]);
        }
        if let Some(v) = confs.as_mut() {
            v.push([
                T::lit(get(conf[0])),
                T::lit(get(conf[1])),
                T::lit(get(conf[2])),
                T::lit(get(conf[3])),
            ]);
        }
        if let Some(v) = labels.as_mut() {
            let raw = get(label);
            let l = Label::from_index(raw as u8)
                .filter(|_| raw.fract() == 0.0 && raw >= 0.0)
                .ok_or_else(|| body.err(format!("label {raw} is not in 0..=3")))?;
            v.push(l);
        }
    }
    mesh.normals = normals;
    mesh.colors = colors;
    mesh.confidence = confs;
    mesh.labels = labels;
    Ok(())
}

fn read_faces<T: Real, R: BufRead>(
    body: &mut Body<R>,
    el: &Element,
    mesh: &mut TriMesh<T>,
) -> Result<()> {
    let Some(list_idx) = el
        .props
        .iter()
        .position(|p| p.name == "vertex_indices" || p.name == "vertex_index")
    else {
        return Err(body.err("face element lacks a vertex_indices list"));
    };
    mesh.faces = Vec::with_capacity(el.count);
    for _ in 0..el.count {
        for (k, p) in el.props.iter().enumerate() {
            match p.kind {
                PropKind::Scalar(s) => {
                    body.read_scalar(s)?;
                }
                PropKind::List { count, item } => {
                    let c = body.read_scalar(count)? as usize;
                    if k == list_idx && c != 3 {
                        return Err(body.err(format!("face with {c} vertices; only triangles are supported")));
                    }
                    let mut f = [0u32; 3];
                    for slot in 0..c {
                        let v = body.read_scalar(item)?;
                        if k == list_idx {
                            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                                return Err(body.err(format!("invalid vertex index {v}")));
                            }
                            f[slot] = v as u32;
                        }
                    }
                    if k == list_idx {
                        mesh.faces.push(f);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Writes `mesh` as binary little-endian PLY. Validates first.
pub fn write_ply<T: Real, W: Write>(mesh: &TriMesh<T>, out: W) -> Result<()> {
    mesh.validate()?;
    let mut w = std::io::BufWriter::new(out);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", mesh.vertices.len());
    header += "property double x\nproperty double y\nproperty double z\n";
    if mesh.normals.is_some() {
        header += "property float nx\nproperty float ny\nproperty float nz\n";
    }
    if mesh.colors.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if mesh.confidence.is_some() {
        for k in 0..4 {
            header += &format!("property float conf_{k}\n");
        }
    }
    if mesh.labels.is_some() {
        header += "property uchar label\n";
    }
    header += &format!("element face {}\n", mesh.faces.len());
    header += "property list uchar int vertex_indices\nend_header\n";
    w.write_all(header.as_bytes())?;

    let to_u8 = |c: T| (c.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
    for i in 0..mesh.vertices.len() {
        let v = mesh.vertices[i];
        for c in [v.x, v.y, v.z] {
            w.write_all(&c.as_f64().to_le_bytes())?;
        }
        if let Some(n) = &mesh.normals {
            for c in [n[i].x, n[i].y, n[i].z] {
                w.write_all(&c.as_f32().to_le_bytes())?;
            }
        }
        if let Some(col) = &mesh.colors {
            w.write_all(&[to_u8(col[i][0]), to_u8(col[i][1]), to_u8(col[i][2])])?;
        }
        if let Some(conf) = &mesh.confidence {
            for c in conf[i] {
                w.write_all(&c.as_f32().to_le_bytes())?;
            }
        }
        if let Some(l) = &mesh.labels {
            w.write_all(&[l[i] as u8])?;
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_mesh<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    read_ply(Error::open(path)?)
}

pub fn save_mesh<T: Real>(mesh: &TriMesh<T>, path: &Path) -> Result<()> {
    write_ply(mesh, std::fs::File::create(path)?)
}
