//! Box geometry features and visual-geometric attention weights.

use ndarray::{Array2, Array3};

use super::config::{Region, RegionSet};
use super::tape::Mat;

/// Clamp for center offsets before taking logs.
pub const DISPLACEMENT_EPS: f64 = 1e-3;
/// Wavelength base of the sinusoidal geometry embedding.
pub const GEO_WAVELENGTH_BASE: f64 = 1000.0;

/// Log-ratio displacement of box `m` relative to box `l`.
pub fn displacement(l: &Region, m: &Region) -> [f64; 4] {
    [
        ((m.x - l.x).abs().max(DISPLACEMENT_EPS) / l.w).ln(),
        ((m.y - l.y).abs().max(DISPLACEMENT_EPS) / l.h).ln(),
        (m.w / l.w).ln(),
        (m.h / l.h).ln(),
    ]
}

/// Expands each displacement component into `dim` sinusoidal features,
/// (sin, cos) pairs at wavelengths `GEO_WAVELENGTH_BASE^(2i/dim)`.
pub fn positional_embed(lambda: &[f64; 4], dim: usize) -> Vec<f64> {
    assert!(dim.is_multiple_of(2), "embedding dimension must be even");
    let mut out = Vec::with_capacity(4 * dim);
    for &component in lambda {
        for i in 0..dim / 2 {
            let wavelength = GEO_WAVELENGTH_BASE.powf(2.0 * i as f64 / dim as f64);
            let angle = component / wavelength;
            out.push(angle.sin());
            out.push(angle.cos());
        }
    }
    out
}

/// λ(l, m) for every ordered pair of regions, shape N×N×4.
pub fn displacement_matrix(regions: &RegionSet) -> Array3<f64> {
    let rs = regions.regions();
    let n = rs.len();
    let mut out = Array3::zeros((n, n, 4));
    for (l, rl) in rs.iter().enumerate() {
        for (m, rm) in rs.iter().enumerate() {
            for (c, v) in displacement(rl, rm).into_iter().enumerate() {
                out[[l, m, c]] = v;
            }
        }
    }
    out
}

/// Embedded displacements as an (N·N)×(4·dim) matrix, row l·N + m.
pub fn geometry_features(lambda: &Array3<f64>, dim: usize) -> Mat {
    let (n, m, _) = lambda.dim();
    let mut out = Array2::zeros((n * m, 4 * dim));
    for l in 0..n {
        for k in 0..m {
            let lam = [
                lambda[[l, k, 0]],
                lambda[[l, k, 1]],
                lambda[[l, k, 2]],
                lambda[[l, k, 3]],
            ];
            for (j, v) in positional_embed(&lam, dim).into_iter().enumerate() {
                out[[l * m + k, j]] = v;
            }
        }
    }
    out
}

/// ReLU(Emb(λ) · W_G) per head: output shape H×N×N.
pub fn geometric_weights(lambda: &Array3<f64>, w_g: &Array2<f64>, dim: usize) -> Array3<f64> {
    let (n, m, _) = lambda.dim();
    let projected = geometry_features(lambda, dim).dot(w_g);
    let heads = w_g.ncols();
    let mut out = Array3::zeros((heads, n, m));
    for h in 0..heads {
        for l in 0..n {
            for k in 0..m {
                out[[h, l, k]] = projected[[l * m + k, h]].max(0.0);
            }
        }
    }
    out
}

/// Visual-geometric attention: row-normalized ω_G ⊙ exp(ω_A). Rows whose
/// geometric weights are all zero use a plain softmax of ω_A.
pub fn fused_attention(omega_a: &Array2<f64>, omega_g: &Array2<f64>) -> Array2<f64> {
    let (n, m) = omega_a.dim();
    assert_eq!(omega_g.dim(), (n, m), "attention matrices must match");
    let flat = omega_g
        .clone()
        .into_shape_with_order((n * m, 1))
        .expect("contiguous reshape");
    super::tape::attention_weights_public(omega_a, &flat)
}
