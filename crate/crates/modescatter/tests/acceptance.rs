//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass/fail line (run with `--nocapture` to see them all).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modescatter::continuation::{evaluate_continuation, fit_rational};
use modescatter::dtn::{dtn_direct, dtn_from_modes, dtn_time_synthesis, gaussian_wavelet, TimeTraceSet};
use modescatter::forward::{condition_at, incident_field, Polarization};
use modescatter::green::{grating_green_apply, GreenApplication};
use modescatter::scatdata::{build_dataset, flux_balance, lemma1_residual, CutoffSpec, Side};
use modescatter::scenarios;
use modescatter::spectral::{lambda_branch, lambda_branch_complex, sl_eigensystem, sl_mu_refined, Branch, C0Profile};
use modescatter::timedomain::time_domain_reference;

fn criterion(id: u32, name: &str, body: impl FnOnce() -> Result<String, String>) {
    match body() {
        Ok(detail) => println!("criterion {id} [{name}]: PASS ({detail})"),
        Err(msg) => {
            println!("criterion {id} [{name}]: FAIL ({msg})");
            panic!("criterion {id} [{name}] failed: {msg}");
        }
    }
}

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

#[test]
fn criterion_1_branch_conventions() {
    criterion(1, "branch/threshold suite", || {
        // The four sign conventions, exactly.
        let cases = [
            // (k, m, alpha): z > 0 and z < 0.
            (2.0, 1, 0.5, true),
            (2.0, 3, 0.5, false),
        ];
        for &(k, m, alpha, propagating) in &cases {
            let z: f64 = k * k - (m as f64 + alpha) * (m as f64 + alpha);
            let out = lambda_branch(k, m, alpha, Branch::Outgoing).unwrap();
            let inc = lambda_branch(k, m, alpha, Branch::Incoming).unwrap();
            let want = if propagating {
                Complex64::new(z.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, (-z).sqrt())
            };
            check(out == want, format!("outgoing {out} != {want}"))?;
            check(inc == -want, format!("incoming {inc} != {}", -want))?;
        }
        // Random conjugacy / sign checks plus upper-half-plane positivity.
        let mut rng = ChaCha8Rng::seed_from_u64(0x616363);
        let mut tested = 0usize;
        while tested < 1000 {
            let k: f64 = rng.gen_range(0.1..5.0);
            let alpha: f64 = rng.gen_range(0.0..1.0);
            let m: i64 = rng.gen_range(-5..=5);
            let Ok(out) = lambda_branch(k, m, alpha, Branch::Outgoing) else { continue };
            let inc = lambda_branch(k, m, alpha, Branch::Incoming).unwrap();
            check((out + inc).norm() == 0.0, format!("incoming != -outgoing at k={k}"))?;
            let z = k * k - (m as f64 + alpha).powi(2);
            if z < 0.0 {
                check(inc == out.conj(), format!("evanescent incoming not conjugate at k={k}"))?;
            }
            check(out.re >= 0.0 || out.im > 0.0, format!("branch left the closed UHP at k={k}"))?;
            let up = lambda_branch_complex(Complex64::new(k, rng.gen_range(1e-3..1.0)), m, alpha);
            check(up.im > 0.0, format!("Im lambda <= 0 for Im k > 0 at k={k}, m={m}"))?;
            tested += 1;
        }
        Ok("4 convention cases exact, 1000 random checks".into())
    });
}

#[test]
fn criterion_2_waveguide_modes() {
    criterion(2, "modal suite", || {
        let b = std::f64::consts::PI;
        let flat = C0Profile::Constant { value: 1.0 };
        let k = 2.0;
        // Richardson pair computed once for all modes (h^2 term cancels).
        let coarse = sl_eigensystem(&flat, b, 384, k, 4).map_err(|e| e.to_string())?;
        let fine = sl_eigensystem(&flat, b, 768, k, 4).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for m in 1..=4usize {
            let mu = (4.0 * fine[m - 1].mu - coarse[m - 1].mu) / 3.0;
            let exact = k * k - (m as f64 - 0.5) * (m as f64 - 0.5) * (std::f64::consts::PI / b).powi(2);
            worst = worst.max((mu - exact).abs());
        }
        // The dedicated refinement helper agrees with the inline pair.
        let helper = sl_mu_refined(&flat, b, 384, k, 1).map_err(|e| e.to_string())?;
        check(
            (helper - (4.0 * fine[0].mu - coarse[0].mu) / 3.0).abs() <= 1e-10,
            "refinement helper disagrees with inline Richardson pair".into(),
        )?;
        check(worst <= 1e-8, format!("refined eigenvalue error {worst:e} > 1e-8"))?;

        // Hellmann-Feynman derivative vs central differences on a perturbed
        // profile.
        let c0 = C0Profile::SinePerturbed { base: 1.0, amp: 0.1 };
        let delta = 1e-4;
        let mut worst_d = 0.0f64;
        for m in 1..=4usize {
            let here = sl_eigensystem(&c0, b, 256, k, m).map_err(|e| e.to_string())?[m - 1].dmu_dk;
            let hi = sl_eigensystem(&c0, b, 256, k + delta, m).map_err(|e| e.to_string())?[m - 1].mu;
            let lo = sl_eigensystem(&c0, b, 256, k - delta, m).map_err(|e| e.to_string())?[m - 1].mu;
            worst_d = worst_d.max((here - (hi - lo) / (2.0 * delta)).abs());
        }
        check(worst_d <= 1e-5, format!("dmu/dk mismatch {worst_d:e} > 1e-5"))?;

        // Monotonicity of every mu_m over a k-sweep.
        for i in 0..20 {
            let kk = 0.5 + 0.15 * i as f64;
            for mode in sl_eigensystem(&c0, b, 128, kk, 5).map_err(|e| e.to_string())? {
                check(mode.dmu_dk > 0.0, format!("dmu/dk <= 0 at k={kk}, m={}", mode.m))?;
            }
        }
        Ok(format!("eigenvalue error {worst:.1e}, derivative error {worst_d:.1e}"))
    });
}

fn born_amplitudes(
    s: &modescatter::forward::Scenario,
    k: f64,
    m_max: i64,
) -> Result<Vec<(i64, Complex64)>, String> {
    // First Born approximation via the outgoing fundamental solution:
    // (-Delta - k^2) v = k^2 (eps - 1) u_inc.
    let g = &s.grid;
    let u0 = incident_field(s, k, 0).map_err(|e| e.to_string())?;
    let mut f = vec![Complex64::new(0.0, 0.0); g.len()];
    for i in 0..g.n2 {
        for j in 0..g.n1 {
            let idx = g.idx(i, j);
            f[idx] = k * k * (s.eps[idx] - 1.0) * u0[idx];
        }
    }
    let app = GreenApplication { k, branch: Branch::Outgoing, mode_cutoff: m_max as usize };
    let out = grating_green_apply(&f, s.alpha, g, &app).map_err(|e| e.to_string())?;
    let (i_at, i0) = (g.row_of(s.t), g.row_of(0.0));
    let mut amps = Vec::new();
    for m in -m_max..=m_max {
        if (m as f64 + s.alpha).powi(2) >= k * k {
            continue;
        }
        let mut coeff = Complex64::new(0.0, 0.0);
        for j in 0..g.n1 {
            coeff += out.field[g.idx(i_at, j)]
                * Complex64::from_polar(1.0, -(m as f64 + s.alpha) * g.x1(j));
        }
        coeff /= g.n1 as f64;
        let r = modescatter::spectral::vertical_root(
            k * k - modescatter::spectral::grating_kappa2(m, s.alpha, g.h1),
            g.h2,
            Branch::Outgoing,
        );
        amps.push((m, coeff * r.powi(-((i_at - i0) as i32))));
    }
    Ok(amps)
}

#[test]
fn criterion_3_forward_solver() {
    criterion(3, "forward-solver suite", || {
        let k = 1.6;
        // Zero-contrast transparency.
        let s0 = scenarios::zero_contrast_grating(0.3, 1.0, 3.0, 16, 0.05);
        let ds0 = build_dataset(&s0, k, 8, &[0]).map_err(|e| e.to_string())?;
        let spur = ds0
            .entries
            .iter()
            .filter(|e| e.side == Side::Reflected)
            .map(|e| e.value().norm())
            .fold(0.0f64, f64::max);
        check(spur <= 1e-10, format!("zero-contrast amplitude {spur:e} > 1e-10"))?;

        // Flat Dirichlet mirror: |a_0| = 1.
        let sm = scenarios::flat_mirror_grating(1.0, 3.0, 16, 0.05);
        let dsm = build_dataset(&sm, 0.8, 4, &[0]).map_err(|e| e.to_string())?;
        let a0 = dsm.amplitude(0, 0, 0.8, Side::Reflected).unwrap();
        check((a0.norm() - 1.0).abs() <= 5e-3, format!("mirror |a0| = {}", a0.norm()))?;

        // Born-regime agreement at contrast 0.01.
        let sb = scenarios::bump_grating(0.3, 1.0, 3.0, 32, 0.05, 0.01, Polarization::Te);
        let dsb = build_dataset(&sb, k, 8, &[0]).map_err(|e| e.to_string())?;
        let born = born_amplitudes(&sb, k, 8)?;
        let scale = born.iter().map(|(_, v)| v.norm()).fold(0.0f64, f64::max);
        let mut worst_born = 0.0f64;
        for (m, bv) in &born {
            let av = dsb.amplitude(0, *m, k, Side::Reflected).unwrap();
            worst_born = worst_born.max((av - bv).norm() / scale);
        }
        check(worst_born <= 5e-2, format!("Born mismatch {worst_born:e} > 5e-2"))?;

        // Second-order self-convergence of a_0 under h -> h/2 (reference at
        // h/4, which biases the ratio upward from 3 toward 5).
        let amp_at = |n1: usize, h2: f64| -> Result<Complex64, String> {
            let s = scenarios::smooth_eps_grating(0.3, 1.0, 3.0, n1, h2);
            let ds = build_dataset(&s, k, 4, &[0]).map_err(|e| e.to_string())?;
            Ok(ds.amplitude(0, 0, k, Side::Reflected).unwrap())
        };
        let (c, m2, f2) = (amp_at(16, 0.1)?, amp_at(32, 0.05)?, amp_at(64, 0.025)?);
        let ratio = (c - f2).norm() / (m2 - f2).norm();
        check(ratio >= 3.5, format!("convergence ratio {ratio:.2} < 3.5"))?;
        Ok(format!(
            "transparency {spur:.1e}, mirror {:.1e}, Born {worst_born:.1e}, ratio {ratio:.2}",
            (a0.norm() - 1.0).abs()
        ))
    });
}

#[test]
fn criterion_4_flux_and_reciprocity() {
    criterion(4, "flux identity", || {
        let k = 1.6;
        let run = |scale: usize| -> Result<f64, String> {
            let s = scenarios::smooth_eps_grating(0.3, 1.0, 3.0, 32 * scale, 0.05 / scale as f64);
            let incident: Vec<i64> = vec![-1, 0, 1];
            let ds = build_dataset(&s, k, 8, &incident).map_err(|e| e.to_string())?;
            let mut worst = 0.0f64;
            for &n in &incident {
                worst = worst.max(flux_balance(&ds, n, k, None).map_err(|e| e.to_string())?);
            }
            Ok(worst)
        };
        let coarse = run(1)?;
        check(coarse <= 1e-2, format!("flux residual {coarse:e} > 1e-2"))?;
        let fine = run(2)?;
        check(fine <= 0.6 * coarse, format!("no halving: {coarse:e} -> {fine:e}"))?;

        // Reciprocity of the flux-normalized scattering matrix.
        let s = scenarios::smooth_eps_grating(0.3, 1.0, 3.0, 32, 0.05);
        let ds = build_dataset(&s, k, 8, &[-1, 0, 1]).map_err(|e| e.to_string())?;
        let lam = |m: i64| (k * k - (m as f64 + s.alpha).powi(2)).sqrt();
        let mut worst_rec = 0.0f64;
        let mut scale = 0.0f64;
        for &n in &[-1i64, 0, 1] {
            for &m in &[-1i64, 0, 1] {
                let a_mn = ds.amplitude(n, m, k, Side::Reflected).unwrap();
                let a_nm = ds.amplitude(m, n, k, Side::Reflected).unwrap();
                worst_rec = worst_rec.max((lam(m) * a_mn - lam(n) * a_nm).norm());
                scale = scale.max((lam(m) * a_mn).norm());
            }
        }
        let rec = worst_rec / scale;
        check(rec <= 2e-2, format!("reciprocity violation {rec:e} > 2e-2"))?;
        Ok(format!("flux {coarse:.1e} -> {fine:.1e}, reciprocity {rec:.1e}"))
    });
}

#[test]
fn criterion_5_trace_identity() {
    criterion(5, "trace identity", || {
        let k = 1.6;
        // Smooth-contrast reference.
        let s = scenarios::smooth_eps_grating(0.3, 1.0, 4.0, 32, 0.05);
        let f: Vec<Complex64> = (0..s.grid.n1)
            .map(|j| {
                let x1 = s.grid.x1(j);
                Complex64::new(1.0 + 0.5 * x1.cos(), 0.3 * x1.sin())
            })
            .collect();
        let cutoff = CutoffSpec::new(s.t);
        let smooth = lemma1_residual(&s, &f, 0, k, &cutoff).map_err(|e| e.to_string())?;
        check(smooth <= 2e-2, format!("smooth-contrast residual {smooth:e} > 2e-2"))?;

        // Free-space closed form on a fine vertical grid.
        let s0 = scenarios::zero_contrast_grating(0.3, 1.0, 4.0, 16, 0.02);
        let f0: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); 16];
        let f0: Vec<Complex64> = f0
            .iter()
            .enumerate()
            .map(|(j, v)| v * Complex64::from_polar(1.0, s0.alpha * s0.grid.x1(j)))
            .collect();
        let free = lemma1_residual(&s0, &f0, 0, k, &cutoff).map_err(|e| e.to_string())?;
        check(free <= 1e-3, format!("free-space residual {free:e} > 1e-3"))?;

        // Cutoff-width invariance.
        let mut vals = Vec::new();
        for w in [0.5, 1.0, 2.0] {
            let c = CutoffSpec { t: s.t, w };
            vals.push(lemma1_residual(&s, &f, 0, k, &c).map_err(|e| e.to_string())?);
        }
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max)
            - vals.iter().cloned().fold(f64::MAX, f64::min);
        check(spread <= 1e-3, format!("cutoff-width spread {spread:e} > 1e-3"))?;
        Ok(format!("smooth {smooth:.1e}, free {free:.1e}, width spread {spread:.1e}"))
    });
}

#[test]
fn criterion_6_dtn_reconstruction() {
    criterion(6, "DtN reconstruction", || {
        let k = 1.6;
        let s = scenarios::smooth_eps_grating(0.3, 1.0, 3.0, 32, 0.05);
        let incident: Vec<i64> = (-15..=15).collect();
        let ds = build_dataset(&s, k, 8, &incident).map_err(|e| e.to_string())?;
        let direct = dtn_direct(&s, k, 2).map_err(|e| e.to_string())?;
        let recon = dtn_from_modes(&ds, &s, k, 2, 15, 1e-10).map_err(|e| e.to_string())?;
        let rel = direct.frobenius_diff(&recon) / direct.frobenius();
        check(rel <= 2e-2, format!("Frobenius mismatch {rel:e} > 2e-2"))?;

        // Expansion residual decreases as the incident span grows.
        let mut residuals = Vec::new();
        for span in [5i64, 8, 11, 15] {
            let r = dtn_from_modes(&ds, &s, k, 2, span, 1e-10).map_err(|e| e.to_string())?;
            residuals.push(r.diagnostic);
        }
        for w in residuals.windows(2) {
            check(w[1] <= w[0] * 1.1, format!("residuals not decreasing: {residuals:?}"))?;
        }
        Ok(format!("Frobenius {rel:.1e}, residuals {residuals:?}"))
    });
}

#[test]
fn criterion_7_continuation() {
    criterion(7, "rational continuation", || {
        // Coefficient a_0(0, k) of a small-contrast grating, fit on the
        // inter-threshold band (2.3, 2.7) at alpha = 0.3 and evaluated below
        // the mode-2 threshold, where the order-2 content of the field is
        // evanescent. At small contrast the threshold branch term in a_0 is
        // second order, so the band-local rational model continues through.
        let s = scenarios::bump_grating(0.3, 1.0, 3.0, 32, 0.05, 0.05, Polarization::Te);
        let n0 = 0i64;
        let sample = |k: f64| -> Result<Complex64, String> {
            let ds = build_dataset(&s, k, 8, &[n0]).map_err(|e| e.to_string())?;
            Ok(ds.amplitude(n0, n0, k, Side::Reflected).unwrap())
        };
        let mut samples = Vec::new();
        for i in 0..15 {
            let k = 2.32 + 0.36 * i as f64 / 14.0;
            samples.push((k, sample(k)?));
        }
        let model = fit_rational(&samples, 0.2).map_err(|e| e.to_string())?;
        let k_eval = 2.25;
        let (cont, estimate) = evaluate_continuation(&model, k_eval).map_err(|e| e.to_string())?;
        let direct = sample(k_eval)?;
        let rel = (cont - direct).norm() / direct.norm();
        check(rel <= 5e-2, format!("continuation error {rel:e} > 5e-2"))?;
        Ok(format!("error {rel:.1e} (estimate {estimate:.1e}) at k = {k_eval}"))
    });
}

#[test]
fn criterion_8_time_synthesis() {
    criterion(8, "hyperbolic DtN synthesis", || {
        // Lossless variable-eps scenario at alpha = 0; band between the
        // Rayleigh thresholds k = 2 and k = 3.
        let s = scenarios::smooth_eps_grating(0.0, 1.0, 10.0, 16, 0.05);
        let ks: Vec<f64> = (0..33).map(|i| 2.05 + 0.028125 * i as f64).collect();
        let mut family = Vec::new();
        for &k in &ks {
            family.push(dtn_direct(&s, k, 2).map_err(|e| e.to_string())?);
        }
        let (dt, nt, n1) = (0.01, 16384usize, 16usize);
        let (t0, sigma, om0) = (50.0, 10.0, 2.5);
        let mut samples = vec![Complex64::new(0.0, 0.0); nt * n1];
        for it in 0..nt {
            let w = gaussian_wavelet(it as f64 * dt, t0, sigma, om0);
            for j in 0..n1 {
                samples[it * n1 + j] = Complex64::new(w, 0.0);
            }
        }
        let g = TimeTraceSet::new(dt, n1, t0 - 4.0 * sigma, (2.05, 2.95), samples);
        let synth = dtn_time_synthesis(&family, &g).map_err(|e| e.to_string())?;
        check(
            synth.causal_leakage <= 1e-3,
            format!("causality leakage {:e} > 1e-3", synth.causal_leakage),
        )?;
        let td = time_domain_reference(&s, &g).map_err(|e| e.to_string())?;
        let (w0, w1) = ((5.0 / dt) as usize, (120.0 / dt) as usize);
        let mut err = 0.0f64;
        let mut nrm = 0.0f64;
        for it in w0..w1 {
            for j in 0..n1 {
                err += (synth.at(it, j) - td.trace.at(it, j)).norm_sqr();
                nrm += synth.at(it, j).norm_sqr();
            }
        }
        let rel = (err / nrm).sqrt();
        check(rel <= 5e-2, format!("synthesis vs time domain {rel:e} > 5e-2"))?;
        Ok(format!("relative L2 {rel:.1e}, causality {:.1e}", synth.causal_leakage))
    });
}

#[test]
fn criterion_9_embedded_eigenvalue_probe() {
    criterion(9, "exceptional-set probe", || {
        let s = scenarios::embedded_reference(32, 0.1).map_err(|e| e.to_string())?;
        let kc = s.predicted_k2.unwrap().sqrt();
        let mut near = 0.0f64;
        for i in -4i32..=4 {
            let k = kc + 2.5e-4 * i as f64;
            near = near.max(condition_at(&s, k).map_err(|e| e.to_string())?);
        }
        check(near > 1e6, format!("condition peak {near:e} <= 1e6 within 1e-3 of k = {kc:.6}"))?;
        let mut far = 0.0f64;
        for k in [kc - 0.05, kc + 0.05] {
            far = far.max(condition_at(&s, k).map_err(|e| e.to_string())?);
        }
        check(far < 1e4, format!("condition {far:e} >= 1e4 at distance 0.05"))?;
        Ok(format!("peak {near:.1e}, off-resonance {far:.1e}"))
    });
}
