use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tensor grid for the computational cell.
///
/// `n1` is the number of unknown nodes per x2-row. For gratings these cover
/// one period [0, 2*pi) with spacing `h1`; for waveguides they cover
/// (0, B] (the Dirichlet node at x1 = 0 is eliminated), which is expressed by
/// `x1_offset = h1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "nx1")]
    pub n1: usize,
    #[serde(rename = "nx2")]
    pub n2: usize,
    pub h1: f64,
    #[serde(rename = "h")]
    pub h2: f64,
    pub x2_min: f64,
    #[serde(default)]
    pub x1_offset: f64,
}

impl Grid {
    pub fn x1(&self, j: usize) -> f64 {
        self.x1_offset + j as f64 * self.h1
    }

    pub fn x2(&self, i: usize) -> f64 {
        self.x2_min + i as f64 * self.h2
    }

    pub fn x2_max(&self) -> f64 {
        self.x2(self.n2 - 1)
    }

    /// Row index of a height that must coincide with a grid line.
    pub fn row_of(&self, x2: f64) -> usize {
        let r = (x2 - self.x2_min) / self.h2;
        let i = r.round() as i64;
        debug_assert!(
            (r - i as f64).abs() < 1e-9,
            "x2 = {x2} does not lie on a grid row"
        );
        i.clamp(0, self.n2 as i64 - 1) as usize
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n1 + j
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    /// Copy of one x2-row.
    pub fn row<'a>(&self, field: &'a [Complex64], i: usize) -> &'a [Complex64] {
        &field[i * self.n1..(i + 1) * self.n1]
    }
}

/// Trapezoidal quadrature weight in x1 for node j.
///
/// Grating rows are periodic (uniform weight); the waveguide row carries a
/// half weight at the Neumann end x1 = B and the Dirichlet node is absent.
pub fn x1_weight(periodic: bool, n1: usize, j: usize) -> f64 {
    if periodic || j + 1 < n1 {
        1.0
    } else {
        0.5
    }
}
