//! Time-domain reference solver: a leapfrog scheme for the second-order wave
//! equation on the rows below the trace line, driven by Dirichlet data on
//! x2 = T, with an absorbing sponge layer replacing the lower radiation
//! condition. Used as the independent check for frequency-synthesized
//! hyperbolic DtN traces.

use num_complex::Complex64;

use crate::dtn::TimeTraceSet;
use crate::error::{Error, Result};
use crate::forward::{apply_rows, Geometry, Scenario};

/// Damping profile: zero above `start`, quadratic ramp to `sigma_max` at the
/// grid bottom.
fn sponge_sigma(s: &Scenario, i: usize, start: f64, sigma_max: f64) -> f64 {
    let x2 = s.grid.x2(i);
    if x2 >= start {
        return 0.0;
    }
    let depth = start - s.grid.x2_min;
    if depth <= 0.0 {
        return 0.0;
    }
    sigma_max * ((start - x2) / depth).powi(2)
}

pub struct TimeDomainResult {
    /// One-sided normal-derivative trace at x2 = T, sampled every step.
    pub trace: TimeTraceSet,
    /// Discrete energy of the interior field after each step.
    pub energy: Vec<f64>,
}

/// Largest local wave speed on the grid (sqrt of 1 / ncoef; the lateral face
/// coefficients never exceed 1, so this bounds the true speed).
fn max_speed(s: &Scenario) -> f64 {
    let g = &s.grid;
    let mut c2 = 0.0f64;
    for i in 0..g.n2 {
        for j in 0..g.n1 {
            if s.is_conductor(i, j) {
                continue;
            }
            c2 = c2.max(1.0 / s.ncoef(i, j));
        }
    }
    c2.sqrt()
}

/// Discrete half-step energy of the leapfrog pair (kinetic part plus the
/// symmetrized potential pairing); conserved exactly by the undamped scheme
/// at alpha = 0 and non-increasing with the sponge active.
fn half_step_energy(s: &Scenario, u0: &[Complex64], u1: &[Complex64], dt: f64, i_t: usize) -> f64 {
    let g = &s.grid;
    let lu1 = apply_rows(s, 0.0, u1, 0, i_t);
    let mut kin = 0.0f64;
    let mut pot = 0.0f64;
    for i in 1..i_t {
        for j in 0..g.n1 {
            let idx = g.idx(i, j);
            kin += s.ncoef(i, j) * ((u1[idx] - u0[idx]) / dt).norm_sqr();
            pot += (u0[idx].conj() * lu1[idx]).re;
        }
    }
    (kin + pot) * g.h1 * g.h2
}

/// March the wave equation below the trace line with Dirichlet data `g` at
/// x2 = T and return the one-sided derivative trace. The bottom is a fixed
/// wall for the backed geometry and a sponge-absorbed radiating floor
/// otherwise. Fails if `g.dt` violates the stability limit.
pub fn time_domain_reference(s: &Scenario, g: &TimeTraceSet) -> Result<TimeDomainResult> {
    s.validate()?;
    let grid = &s.grid;
    let n1 = grid.n1;
    assert_eq!(g.n1, n1, "trace width must match the grid");
    let dt = g.dt;
    let limit = grid.h1.min(grid.h2) / (max_speed(s) * std::f64::consts::SQRT_2);
    if dt > limit {
        return Err(Error::CflViolation { dt, limit });
    }

    let i_t = grid.row_of(s.t);
    assert!(i_t >= 2, "need at least two rows below the trace line");
    let sponge_wanted = !matches!(s.geometry, Geometry::GratingCase2 { .. });
    let sponge_start = -s.t - 0.25 * (s.t_prime - s.t);
    // Gentle ramp: strong enough for high round-trip absorption yet smooth
    // enough to avoid impedance reflections at the sponge entry.
    let sigma_max = 6.0;
    let sigma: Vec<f64> = (0..=i_t)
        .map(|i| {
            if sponge_wanted {
                sponge_sigma(s, i, sponge_start, sigma_max)
            } else {
                0.0
            }
        })
        .collect();

    let nt = g.nt();
    let mut u_old = grid.zeros();
    let mut u = grid.zeros();
    let mut samples = vec![Complex64::new(0.0, 0.0); nt * n1];
    let mut energy = Vec::with_capacity(nt);
    let dt2 = dt * dt;

    for it in 0..nt {
        // Trace output from the current field (time t = it * dt).
        for j in 0..n1 {
            samples[it * n1 + j] = (3.0 * u[grid.idx(i_t, j)] - 4.0 * u[grid.idx(i_t - 1, j)]
                + u[grid.idx(i_t - 2, j)])
                / (2.0 * grid.h2);
        }
        if it + 1 == nt {
            energy.push(half_step_energy(s, &u_old, &u, dt, i_t));
            break;
        }
        let lu = apply_rows(s, 0.0, &u, 0, i_t);
        let mut u_new = grid.zeros();
        for i in 1..i_t {
            let (damp_m, damp_p) = (1.0 - 0.5 * sigma[i] * dt, 1.0 + 0.5 * sigma[i] * dt);
            for j in 0..n1 {
                if s.is_conductor(i, j) {
                    continue;
                }
                let idx = grid.idx(i, j);
                u_new[idx] = (2.0 * u[idx] - damp_m * u_old[idx]
                    - dt2 / s.ncoef(i, j) * lu[idx])
                    / damp_p;
            }
        }
        // Dirichlet drive on the trace row at the new time level; the bottom
        // row stays zero (wall, or behind the sponge).
        for j in 0..n1 {
            u_new[grid.idx(i_t, j)] = g.at(it + 1, j);
        }
        energy.push(half_step_energy(s, &u, &u_new, dt, i_t));
        u_old = u;
        u = u_new;
    }

    Ok(TimeDomainResult {
        trace: TimeTraceSet::new(dt, n1, g.onset, g.band, samples),
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtn::{dtn_direct, dtn_time_synthesis, gaussian_wavelet, DtNMatrix};
    use crate::scenarios;

    fn wavelet_input(nt: usize, n1: usize, dt: f64, t0: f64, sigma: f64, om0: f64) -> TimeTraceSet {
        let mut samples = vec![Complex64::new(0.0, 0.0); nt * n1];
        for it in 0..nt {
            let w = gaussian_wavelet(it as f64 * dt, t0, sigma, om0);
            for j in 0..n1 {
                samples[it * n1 + j] = Complex64::new(w, 0.0);
            }
        }
        TimeTraceSet::new(dt, n1, t0 - 4.0 * sigma, (2.1, 2.9), samples)
    }

    #[test]
    fn zero_input_stays_zero() {
        let s = scenarios::zero_contrast_grating(0.0, 1.0, 3.0, 8, 0.05);
        let g = TimeTraceSet::new(0.02, 8, 0.0, (2.1, 2.9), vec![Complex64::new(0.0, 0.0); 8 * 256]);
        let out = time_domain_reference(&s, &g).unwrap();
        assert!(out.trace.samples.iter().all(|v| v.norm() == 0.0));
        assert!(out.energy.iter().all(|&e| e.abs() <= 1e-30));
    }

    #[test]
    fn cfl_violation_reported() {
        let s = scenarios::zero_contrast_grating(0.0, 1.0, 3.0, 8, 0.05);
        let g = TimeTraceSet::new(0.05, 8, 0.0, (2.1, 2.9), vec![Complex64::new(0.0, 0.0); 8 * 16]);
        match time_domain_reference(&s, &g) {
            Err(Error::CflViolation { dt, limit }) => assert!(dt > limit),
            other => panic!("expected CflViolation, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn energy_non_increasing_after_forcing() {
        // Drive with a compactly supported wavelet, then watch the energy:
        // once the boundary data has returned to zero the scheme with the
        // sponge must not gain energy (1% slack on the running maximum).
        let s = scenarios::zero_contrast_grating(0.0, 1.0, 5.0, 8, 0.05);
        let (dt, nt) = (0.02, 4096usize);
        let g = wavelet_input(nt, 8, dt, 10.0, 2.5, 2.5);
        let out = time_domain_reference(&s, &g).unwrap();
        let quiet_from = ((10.0 + 4.0 * 2.5) / dt).ceil() as usize + 2;
        let mut prev = f64::INFINITY;
        let peak = out.energy[..quiet_from].iter().cloned().fold(0.0f64, f64::max);
        for &e in &out.energy[quiet_from..] {
            assert!(e <= prev + 0.01 * peak, "energy grew: {e} after {prev}");
            prev = e;
        }
        // The sponge actually removes energy.
        assert!(*out.energy.last().unwrap() < 0.5 * peak);
    }

    #[test]
    fn matches_frequency_synthesis_zero_contrast() {
        // Band-limited drive on a homogeneous half-space below the trace:
        // the leapfrog derivative trace must match the frequency-synthesized
        // DtN trace to a few percent.
        let s = scenarios::zero_contrast_grating(0.0, 1.0, 10.0, 8, 0.05);
        // Band between the Rayleigh thresholds k = 2 and k = 3 at alpha = 0.
        let ks: Vec<f64> = (0..33).map(|i| 2.05 + 0.028125 * i as f64).collect();
        let family: Vec<DtNMatrix> = ks.iter().map(|&k| dtn_direct(&s, k, 2).unwrap()).collect();

        let (dt, nt) = (0.01, 16384usize);
        let g = wavelet_input(nt, 8, dt, 50.0, 10.0, 2.5);
        let synth = dtn_time_synthesis(&family, &g).unwrap();
        let td = time_domain_reference(&s, &g).unwrap();

        // Compare over the window where the signal lives but lower-boundary
        // artifacts from the finite sponge have not accumulated.
        let (w0, w1) = ((5.0 / dt) as usize, (120.0 / dt) as usize);
        let mut err = 0.0f64;
        let mut nrm = 0.0f64;
        for it in w0..w1 {
            for j in 0..8 {
                err += (synth.at(it, j) - td.trace.at(it, j)).norm_sqr();
                nrm += synth.at(it, j).norm_sqr();
            }
        }
        let rel = (err / nrm).sqrt();
        assert!(rel <= 5e-2, "time-domain vs synthesis mismatch {rel:e}");
    }
}
