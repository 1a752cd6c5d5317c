//! Named reference scenarios used by the test suite and the CLI examples.

use crate::error::Result;
use crate::forward::{embedded_eigen_scenario, Geometry, Polarization, Scenario};
use crate::grid::Grid;
use crate::spectral::C0Profile;
use std::f64::consts::PI;

/// Grating grid covering [0, 2*pi) x [-bottom_depth, top], with x2 = 0 on a
/// grid row (top and bottom_depth must be multiples of h2).
pub fn grating_grid(top: f64, bottom_depth: f64, n1: usize, h2: f64) -> Grid {
    let steps = (top + bottom_depth) / h2;
    assert!(
        (steps - steps.round()).abs() < 1e-9,
        "grid heights must be multiples of h2"
    );
    Grid {
        n1,
        n2: steps.round() as usize + 1,
        h1: 2.0 * PI / n1 as f64,
        h2,
        x2_min: -bottom_depth,
        x1_offset: 0.0,
    }
}

/// Waveguide grid covering (0, B] x [-bottom_depth, top]; the Dirichlet node
/// at x1 = 0 is not stored.
pub fn waveguide_grid(b: f64, top: f64, bottom_depth: f64, n1: usize, h2: f64) -> Grid {
    let h1 = b / n1 as f64;
    let steps = (top + bottom_depth) / h2;
    assert!((steps - steps.round()).abs() < 1e-9);
    Grid {
        n1,
        n2: steps.round() as usize + 1,
        h1,
        h2,
        x2_min: -bottom_depth,
        x1_offset: h1,
    }
}

/// C2 bump supported on |x2| < w, equal to 1 at x2 = 0.
pub fn bump(x2: f64, w: f64) -> f64 {
    if x2.abs() < w {
        let c = (PI * x2 / (2.0 * w)).cos();
        c * c
    } else {
        0.0
    }
}

/// TE grating with eps = 1 everywhere (transparent medium).
pub fn zero_contrast_grating(alpha: f64, t: f64, t_prime: f64, n1: usize, h2: f64) -> Scenario {
    let grid = grating_grid(t_prime, t_prime, n1, h2);
    let eps = vec![1.0; grid.len()];
    Scenario {
        geometry: Geometry::GratingCase1,
        polarization: Polarization::Te,
        alpha,
        t,
        t_prime,
        grid,
        eps,
        conductor: Vec::new(),
        c0: None,
        predicted_k2: None,
    }
}

/// Grating with a smooth bump contrast of the given amplitude, supported on
/// |x2| < 0.6 t, modulated in x1 so lateral modes couple.
pub fn bump_grating(
    alpha: f64,
    t: f64,
    t_prime: f64,
    n1: usize,
    h2: f64,
    amp: f64,
    polarization: Polarization,
) -> Scenario {
    let mut s = zero_contrast_grating(alpha, t, t_prime, n1, h2);
    s.polarization = polarization;
    let g = s.grid.clone();
    for i in 0..g.n2 {
        let b = bump(g.x2(i), 0.6 * t);
        for j in 0..g.n1 {
            s.eps[g.idx(i, j)] = 1.0 + amp * b * (0.6 + 0.4 * g.x1(j).cos());
        }
    }
    s
}

/// Smooth-eps TE reference grating (amplitude 0.3).
pub fn smooth_eps_grating(alpha: f64, t: f64, t_prime: f64, n1: usize, h2: f64) -> Scenario {
    bump_grating(alpha, t, t_prime, n1, h2, 0.3, Polarization::Te)
}

/// Same contrast, TM polarization.
pub fn smooth_eps_grating_tm(alpha: f64, t: f64, t_prime: f64, n1: usize, h2: f64) -> Scenario {
    bump_grating(alpha, t, t_prime, n1, h2, 0.3, Polarization::Tm)
}

/// Flat Dirichlet mirror: conductor filling -t < x2 <= -t/2, alpha = 0, TE.
/// The total field reflects off the plane x2 = -t/2 with |a_0| = 1.
pub fn flat_mirror_grating(t: f64, t_prime: f64, n1: usize, h2: f64) -> Scenario {
    let mut s = zero_contrast_grating(0.0, t, t_prime, n1, h2);
    let g = s.grid.clone();
    let mut mask = vec![false; g.len()];
    for i in 0..g.n2 {
        let x2 = g.x2(i);
        if x2 > -t + 1e-12 && x2 <= -0.5 * t + 1e-12 {
            for j in 0..g.n1 {
                mask[g.idx(i, j)] = true;
            }
        }
    }
    s.conductor = mask;
    s
}

/// Grating over a Dirichlet wall at x2 = -wall_depth (case 2 geometry) with a
/// smooth bump contrast.
pub fn case2_grating(
    alpha: f64,
    t: f64,
    t_prime: f64,
    wall_depth: f64,
    n1: usize,
    h2: f64,
    amp: f64,
) -> Scenario {
    let grid = grating_grid(t_prime, wall_depth, n1, h2);
    let mut eps = vec![1.0; grid.len()];
    for i in 0..grid.n2 {
        let b = bump(grid.x2(i), 0.6 * t);
        for j in 0..grid.n1 {
            eps[grid.idx(i, j)] = 1.0 + amp * b * (0.6 + 0.4 * grid.x1(j).cos());
        }
    }
    Scenario {
        geometry: Geometry::GratingCase2 { wall_depth },
        polarization: Polarization::Te,
        alpha,
        t,
        t_prime,
        grid,
        eps,
        conductor: Vec::new(),
        c0: None,
        predicted_k2: None,
    }
}

/// Stratified waveguide of width b with background c0(x1) = 1 + 0.1 sin(pi
/// x1/b) and a bump sound-speed contrast of the given amplitude in the strip.
pub fn waveguide_scenario(
    b: f64,
    t: f64,
    t_prime: f64,
    n1: usize,
    h2: f64,
    amp: f64,
) -> Scenario {
    let grid = waveguide_grid(b, t_prime, t_prime, n1, h2);
    let c0 = C0Profile::SinePerturbed { base: 1.0, amp: 0.1 };
    let mut eps = vec![0.0; grid.len()];
    for i in 0..grid.n2 {
        let bx = bump(grid.x2(i), 0.6 * t);
        for j in 0..grid.n1 {
            let x1 = grid.x1(j);
            let background = 1.0 + 0.1 * (PI * x1 / b).sin();
            eps[grid.idx(i, j)] = background + amp * bx * (PI * x1 / b).sin();
        }
    }
    Scenario {
        geometry: Geometry::Waveguide { b },
        polarization: Polarization::Acoustic,
        alpha: 0.0,
        t,
        t_prime,
        grid,
        eps,
        conductor: Vec::new(),
        c0: Some(c0),
        predicted_k2: None,
    }
}

/// Embedded-eigenvalue reference: Poeschl-Teller well V = -0.75 sech^2(x2)
/// with bound state E = -0.25, carried by the Fourier order m = 0 at alpha =
/// 0.7, so k^2 = (m+alpha)^2 + E = 0.24 sits inside the continuous spectrum
/// (the order m = -1 is propagating there).
pub fn embedded_reference(n1: usize, h2: f64) -> Result<Scenario> {
    let grid = grating_grid(7.0, 7.0, n1, h2);
    embedded_eigen_scenario(
        &|x2: f64| -0.75 / x2.cosh().powi(2),
        -0.25,
        0,
        0.7,
        6.0,
        grid,
    )
}
