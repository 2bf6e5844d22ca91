//! Alpha compositing along a ray, in density and occupancy form.

use crate::num::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Composite<T> {
    pub color: [T; 3],
    /// Per-sample contribution weights.
    pub weights: Vec<T>,
    /// Sum of the weights.
    pub opacity: T,
}

/// `Ĉ = Σ T_j (1 - exp(-σ_j δ_j)) c_j` with `T_j = exp(-Σ_{k<j} σ_k δ_k)`.
pub fn composite_transmittance<T: Real>(sigma: &[T], delta: &[T], colors: &[[T; 3]]) -> Composite<T> {
    assert!(sigma.len() == delta.len() && sigma.len() == colors.len());
    let mut optical_depth = T::zero();
    let mut color = [T::zero(); 3];
    let mut weights = Vec::with_capacity(sigma.len());
    let mut opacity = T::zero();
    for j in 0..sigma.len() {
        let tau = sigma[j] * delta[j];
        let w = (-optical_depth).exp() * (T::one() - (-tau).exp());
        for k in 0..3 {
            color[k] += w * colors[j][k];
        }
        opacity += w;
        weights.push(w);
        optical_depth += tau;
    }
    Composite { color, weights, opacity }
}

/// `Ĉ = Σ o_j Π_{k<j}(1 - o_k) c_j`. The running product makes every sample
/// after a fully occupied one contribute exactly zero.
pub fn composite_occupancy<T: Real>(occupancy: &[T], colors: &[[T; 3]]) -> Composite<T> {
    assert_eq!(occupancy.len(), colors.len());
    let mut trans = T::one();
    let mut color = [T::zero(); 3];
    let mut weights = Vec::with_capacity(occupancy.len());
    let mut opacity = T::zero();
    for (&o, c) in occupancy.iter().zip(colors) {
        let w = trans * o;
        for k in 0..3 {
            color[k] += w * c[k];
        }
        opacity += w;
        weights.push(w);
        trans *= T::one() - o;
    }
    Composite { color, weights, opacity }
}

/// Occupancy equivalent of a density sample, `1 - exp(-σδ)`.
pub fn density_to_occupancy<T: Real>(sigma: T, delta: T) -> T {
    T::one() - (-sigma * delta).exp()
}

/// Derivatives of `g · composite_occupancy(o, c)` with respect to every
/// occupancy and color, given the upstream gradient `g = dL/dĈ`.
pub fn composite_occupancy_backward<T: Real>(
    occupancy: &[T],
    colors: &[[T; 3]],
    upstream: [T; 3],
) -> (Vec<T>, Vec<[T; 3]>) {
    let n = occupancy.len();
    // transmittance before each sample
    let mut trans = Vec::with_capacity(n);
    let mut t = T::one();
    for &o in occupancy {
        trans.push(t);
        t *= T::one() - o;
    }
    let mut d_occ = vec![T::zero(); n];
    let mut d_col = vec![[T::zero(); 3]; n];
    // color composited from sample j+1 onward, as if it started unoccluded
    let mut rest = [T::zero(); 3];
    for j in (0..n).rev() {
        let (o, c) = (occupancy[j], colors[j]);
        let mut d = T::zero();
        for k in 0..3 {
            d += upstream[k] * (c[k] - rest[k]);
            d_col[j][k] = upstream[k] * trans[j] * o;
            rest[k] = o * c[k] + (T::one() - o) * rest[k];
        }
        d_occ[j] = trans[j] * d;
    }
    (d_occ, d_col)
}
