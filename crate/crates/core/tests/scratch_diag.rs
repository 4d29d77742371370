// Temporary diagnostic (deleted before finalizing).
use cavidyn::bo::solve_bo;
use cavidyn::grid::Grid1D;
use cavidyn::model::Preset;
use cavidyn::polariton::*;

#[test]
fn diag_crossings() {
    let p = Preset::Pcet.params();
    let r = Grid1D::new(-30.0, 30.0, 240).unwrap();
    let nuc = Grid1D::new(-5.0, -1.0, 41).unwrap();
    let bo = solve_bo(&p, &r, &nuc, 6).unwrap();
    let set = solve_polaritonic_surfaces(&bo, &p, 6, 6).unwrap();
    println!("PCET surfaces 1,2 (0-based):");
    for j in 0..nuc.n() {
        println!(
            "R={:+.2} gap12={:.5e} k1 dom=({},{}) w={:.2} | k2 dom=({},{}) w={:.2}",
            nuc.point(j),
            set.energies[[j, 2]] - set.energies[[j, 1]],
            set.dominant_electronic[[j, 1]], set.dominant_photon[[j, 1]], set.dominant_weight[[j, 1]],
            set.dominant_electronic[[j, 2]], set.dominant_photon[[j, 2]], set.dominant_weight[[j, 2]],
        );
    }
    let pe = Preset::Elex.params();
    let nuc_e = Grid1D::new(-1.0, 1.0, 21).unwrap();
    let bo_e = solve_bo(&pe, &r, &nuc_e, 6).unwrap();
    let set_e = solve_polaritonic_surfaces(&bo_e, &pe, 6, 6).unwrap();
    println!("ELEX surfaces 2,3 (0-based):");
    for j in 0..nuc_e.n() {
        println!(
            "R={:+.2} gap23={:.5e} k2 dom=({},{}) w={:.2} | k3 dom=({},{}) w={:.2}",
            nuc_e.point(j),
            set_e.energies[[j, 3]] - set_e.energies[[j, 2]],
            set_e.dominant_electronic[[j, 2]], set_e.dominant_photon[[j, 2]], set_e.dominant_weight[[j, 2]],
            set_e.dominant_electronic[[j, 3]], set_e.dominant_photon[[j, 3]], set_e.dominant_weight[[j, 3]],
        );
    }
}

#[test]
fn diag_elex_lower_crossing() {
    let pe = Preset::Elex.params();
    let r = Grid1D::new(-30.0, 30.0, 240).unwrap();
    let nuc = Grid1D::new(-3.0, -1.5, 16).unwrap();
    let bo = solve_bo(&pe, &r, &nuc, 6).unwrap();
    let set = solve_polaritonic_surfaces(&bo, &pe, 6, 6).unwrap();
    for j in 0..nuc.n() {
        println!(
            "R={:+.2} gap12={:.5e} k1 dom=({},{}) | k2 dom=({},{})",
            nuc.point(j),
            set.energies[[j, 2]] - set.energies[[j, 1]],
            set.dominant_electronic[[j, 1]], set.dominant_photon[[j, 1]],
            set.dominant_electronic[[j, 2]], set.dominant_photon[[j, 2]],
        );
    }
}

#[test]
fn diag_elex_detuning_at_start() {
    let pe = Preset::Elex.params();
    let r = Grid1D::new(-30.0, 30.0, 240).unwrap();
    let nuc = Grid1D::new(-6.0, -2.5, 15).unwrap();
    let bo = solve_bo(&pe, &r, &nuc, 3).unwrap();
    for j in 0..nuc.n() {
        let gap = bo.energies[[j, 1]] - bo.energies[[j, 0]];
        println!("R={:+.2} gap01={:.4e} detuning(gap-w)={:+.4e}", nuc.point(j), gap, gap - 0.049);
    }
}

#[test]
fn diag_step_timing_and_energy_fluctuation() {
    use cavidyn::grid::{Grid2D, Grid3D};
    use cavidyn::polariton::solve_polaritonic_surfaces;
    use cavidyn::propagator::*;
    use std::time::Instant;

    // Production grid timing.
    let gp = Grid3D::new(
        Grid1D::new(-30.0, 30.0, 240).unwrap(),
        Grid1D::new(-9.0, 9.0, 160).unwrap(),
        Grid1D::new(-40.0, 40.0, 48).unwrap(),
    );
    let params = Preset::Pcet.params();
    let bo = solve_bo(&params, &gp.r, &gp.nuc, 6).unwrap();
    let pol = solve_polaritonic_surfaces(&bo, &params, 6, 6).unwrap();
    let prop = Propagator::for_model(&params, &gp, 0.1).unwrap();
    let mut snap = build_initial_state(
        &InitialStateSpec::standard(InitialStateKind::Polaritonic),
        &params, &gp, &bo, Some(&pol),
    ).unwrap();
    let t0 = Instant::now();
    for _ in 0..20 { prop.step(&mut snap); }
    let per_step = t0.elapsed().as_secs_f64() / 20.0;
    println!("production step: {:.3} s  => 14805 steps ≈ {:.1} min", per_step, per_step * 14805.0 / 60.0);
    let t1 = Instant::now();
    let _rec = prop.observables(&snap, Some(&bo)).unwrap();
    println!("observables eval: {:.3} s", t1.elapsed().as_secs_f64());

    // Coarse grid timing + energy fluctuation over 400 steps (40 au ≈ 1 fs).
    let gc = Grid3D::new(
        Grid1D::new(-30.0, 30.0, 120).unwrap(),
        Grid1D::new(-9.0, 9.0, 80).unwrap(),
        Grid1D::new(-28.0, 28.0, 32).unwrap(),
    );
    let boc = solve_bo(&params, &gc.r, &gc.nuc, 6).unwrap();
    let polc = solve_polaritonic_surfaces(&boc, &params, 6, 6).unwrap();
    let propc = Propagator::for_model(&params, &gc, 0.1).unwrap();
    let mut snapc = build_initial_state(
        &InitialStateSpec::standard(InitialStateKind::Polaritonic),
        &params, &gc, &boc, Some(&polc),
    ).unwrap();
    let t2 = Instant::now();
    let e0 = propc.engine().total_energy(&snapc.amplitudes).unwrap();
    let mut emin = e0; let mut emax = e0;
    for s in 0..400 {
        propc.step(&mut snapc);
        if s % 20 == 19 {
            let e = propc.engine().total_energy(&snapc.amplitudes).unwrap();
            emin = emin.min(e); emax = emax.max(e);
        }
    }
    let per_step_c = t2.elapsed().as_secs_f64() / 400.0;
    println!("coarse step(with obs every 20): {:.4} s => 14805 ≈ {:.1} min", per_step_c, per_step_c * 14805.0 / 60.0);
    println!("E0={:.12} fluct range [{:+.3e}, {:+.3e}] rel={:.3e}",
        e0, emin - e0, emax - e0, (emax - emin) / e0.abs());
    let leak = propc.boundary_density(&snapc);
    println!("coarse boundary density after 40 au: {:.3e}", leak);
}

#[test]
fn diag_boundary_faces() {
    use cavidyn::grid::Grid3D;
    use cavidyn::polariton::solve_polaritonic_surfaces;
    use cavidyn::propagator::*;

    let params = Preset::Pcet.params();
    for (label, nr, nn, qb, nq) in [
        ("coarse q28x32", 120usize, 80usize, 28.0, 32usize),
        ("coarse q40x48", 120, 80, 40.0, 48),
    ] {
        let g = Grid3D::new(
            Grid1D::new(-30.0, 30.0, nr).unwrap(),
            Grid1D::new(-9.0, 9.0, nn).unwrap(),
            Grid1D::new(-qb, qb, nq).unwrap(),
        );
        let bo = solve_bo(&params, &g.r, &g.nuc, 6).unwrap();
        let pol = solve_polaritonic_surfaces(&bo, &params, 6, 6).unwrap();
        let prop = Propagator::for_model(&params, &g, 0.1).unwrap();
        let mut snap = build_initial_state(
            &InitialStateSpec::standard(InitialStateKind::Polaritonic),
            &params, &g, &bo, Some(&pol),
        ).unwrap();

        let face_masses = |s: &WavefunctionSnapshot| -> Vec<f64> {
            let (n_r, n_nuc, n_q) = (s.grid.r.n(), s.grid.nuc.n(), s.grid.q.n());
            let cell = s.grid.cell_volume();
            let mut out = Vec::new();
            for (axis, n, h) in [(0usize, n_r, s.grid.r.spacing()), (1, n_nuc, s.grid.nuc.spacing()), (2, n_q, s.grid.q.spacing())] {
                for face in [0usize, n - 1] {
                    let mut m = 0.0;
                    for ir in 0..n_r { for j in 0..n_nuc { for iq in 0..n_q {
                        let on = match axis { 0 => ir == face, 1 => j == face, _ => iq == face };
                        if on { m += s.amplitudes[(ir * n_nuc + j) * n_q + iq].norm_sqr(); }
                    }}}
                    out.push(m * cell / h);
                }
            }
            out
        };
        println!("{label} t=0:  {:?}", face_masses(&snap).iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>());
        for _ in 0..400 { prop.step(&mut snap); }
        println!("{label} t=40: {:?}", face_masses(&snap).iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>());
    }
}

#[test]
fn diag_rface_source_and_trend() {
    use cavidyn::grid::Grid3D;
    use cavidyn::polariton::solve_polaritonic_surfaces;
    use cavidyn::propagator::*;

    let params = Preset::Pcet.params();
    let g = Grid3D::new(
        Grid1D::new(-30.0, 30.0, 120).unwrap(),
        Grid1D::new(-9.0, 9.0, 80).unwrap(),
        Grid1D::new(-28.0, 28.0, 32).unwrap(),
    );
    let bo = solve_bo(&params, &g.r, &g.nuc, 6).unwrap();
    // BO state boundary amplitudes and energies at R=-4 (j index nearest).
    let j = g.nuc.nearest_index(-4.0);
    let v_edge = cavidyn::model::matter_potential(-30.0, g.nuc.point(j), &params).unwrap();
    println!("V_m(r=-30, R={:.2}) = {:.4}", g.nuc.point(j), v_edge);
    for i in 0..6 {
        println!(
            "el state {i}: eps={:+.4}  |phi(-30)|={:.2e}  |phi(+30)|={:.2e}",
            bo.energies[[j, i]],
            bo.states[[j, i, 0]].abs(),
            bo.states[[j, i, g.r.n() - 1]].abs()
        );
    }
    let pol = solve_polaritonic_surfaces(&bo, &params, 6, 6).unwrap();
    let prop = Propagator::for_model(&params, &g, 0.1).unwrap();
    let mut snap = build_initial_state(
        &InitialStateSpec::standard(InitialStateKind::Polaritonic),
        &params, &g, &bo, Some(&pol),
    ).unwrap();
    let pops = bo_populations(&snap, &bo).unwrap();
    println!("initial |C_i|^2: {:?}", pops.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>());

    let rface = |s: &WavefunctionSnapshot| -> f64 {
        let (n_r, n_nuc, n_q) = (s.grid.r.n(), s.grid.nuc.n(), s.grid.q.n());
        let w = s.grid.nuc.spacing() * s.grid.q.spacing();
        let mut m0 = 0.0; let mut m1 = 0.0;
        for jj in 0..n_nuc { for iq in 0..n_q {
            m0 += s.amplitudes[jj * n_q + iq].norm_sqr();
            m1 += s.amplitudes[((n_r - 1) * n_nuc + jj) * n_q + iq].norm_sqr();
        }}
        (m0.max(m1)) * w
    };
    for chunk in 0..10 {
        for _ in 0..400 { prop.step(&mut snap); }
        println!("t={:5.0} au  r-face={:.2e}", (chunk + 1) as f64 * 40.0, rface(&snap));
    }
}

#[test]
fn diag_pointwise_boundary() {
    use cavidyn::grid::Grid3D;
    use cavidyn::polariton::solve_polaritonic_surfaces;
    use cavidyn::propagator::*;

    let params = Preset::Pcet.params();
    for (label, nr, nn, qb, nq, nsteps) in [
        ("coarse", 120usize, 80usize, 28.0, 32usize, 4000usize),
        ("production", 240, 160, 40.0, 48, 600),
    ] {
        let g = Grid3D::new(
            Grid1D::new(-30.0, 30.0, nr).unwrap(),
            Grid1D::new(-9.0, 9.0, nn).unwrap(),
            Grid1D::new(-qb, qb, nq).unwrap(),
        );
        let bo = solve_bo(&params, &g.r, &g.nuc, 6).unwrap();
        let pol = solve_polaritonic_surfaces(&bo, &params, 6, 6).unwrap();
        let prop = Propagator::for_model(&params, &g, 0.1).unwrap();
        let mut snap = build_initial_state(
            &InitialStateSpec::standard(InitialStateKind::Polaritonic),
            &params, &g, &bo, Some(&pol),
        ).unwrap();
        let maxpt = |s: &WavefunctionSnapshot| -> f64 {
            let (n_r, n_nuc, n_q) = (s.grid.r.n(), s.grid.nuc.n(), s.grid.q.n());
            let mut worst = 0.0f64;
            for ir in 0..n_r { for j in 0..n_nuc { for iq in 0..n_q {
                if ir == 0 || ir == n_r-1 || j == 0 || j == n_nuc-1 || iq == 0 || iq == n_q-1 {
                    worst = worst.max(s.amplitudes[(ir * n_nuc + j) * n_q + iq].norm_sqr());
                }
            }}}
            worst
        };
        let mut peak = maxpt(&snap);
        println!("{label} t=0 max-pointwise boundary |psi|^2 = {peak:.2e}");
        let chunk = nsteps / 10;
        for c in 0..10 {
            for _ in 0..chunk { prop.step(&mut snap); }
            let m = maxpt(&snap);
            peak = peak.max(m);
            if c % 3 == 2 || c == 9 {
                println!("{label} t={:6.0} au  max-pointwise = {m:.2e}", ((c + 1) * chunk) as f64 * 0.1);
            }
        }
        println!("{label} PEAK over window = {peak:.2e}");
    }
}

#[test]
fn diag_efactor_failures() {
    use cavidyn::efactor::*;
    use cavidyn::model::{self, Preset};
    use cavidyn::propagator::{build_initial_state, InitialStateKind, InitialStateSpec, Propagator};
    use cavidyn::grid::{Grid1D, Grid3D, fd_derivative};
    use num_complex::Complex64;

    // --- Part 1: factorized density mismatch magnitude ---
    let mut params = Preset::Pcet.params();
    params.lambda = 0.0;
    let grid = Grid3D {
        r: Grid1D::new(-30.0, 30.0, 96).unwrap(),
        nuc: Grid1D::new(-9.0, 9.0, 64).unwrap(),
        q: Grid1D::new(-28.0, 28.0, 32).unwrap(),
    };
    let bo_set = cavidyn::bo::solve_bo(&params, &grid.r, &grid.nuc, 3).unwrap();
    let spec = InitialStateSpec {
        kind: InitialStateKind::BoFactorized,
        level: 1,
        center: -4.0,
        alpha: 2.85,
    };
    let snap = build_initial_state(&spec, &params, &grid, &bo_set, None).unwrap();
    let nw = invert_nuclear(&snap, DENSITY_THRESHOLD_REL, None).unwrap();
    let alpha = 2.85;
    let norm = (2.0 * alpha / std::f64::consts::PI).sqrt();
    let mut worst_core = 0.0_f64;
    let mut worst_edge = 0.0_f64;
    let peak = nw.density.iter().cloned().fold(0.0, f64::max);
    for (j, big_r) in grid.nuc.points().into_iter().enumerate() {
        if !nw.mask.valid[j] { continue; }
        let expect = norm * (-2.0 * alpha * (big_r + 4.0).powi(2)).exp();
        let rel = ((nw.density[j] - expect) / expect).abs();
        if nw.density[j] > 1e-3 * peak { worst_core = worst_core.max(rel); }
        else { worst_edge = worst_edge.max(rel); }
    }
    println!("factorized density rel err: core {worst_core:.3e} edge {worst_edge:.3e}");

    // --- Part 2: gauge residual anatomy on the coupled pipeline ---
    let params = Preset::Pcet.params();
    let grid = Grid3D {
        r: Grid1D::new(-30.0, 30.0, 120).unwrap(),
        nuc: Grid1D::new(-9.0, 9.0, 80).unwrap(),
        q: Grid1D::new(-40.0, 40.0, 48).unwrap(),
    };
    let bo_set = cavidyn::bo::solve_bo(&params, &grid.r, &grid.nuc, 6).unwrap();
    let pol_set = cavidyn::polariton::solve_polaritonic_surfaces(&bo_set, &params, 6, 6).unwrap();
    let spec = InitialStateSpec::standard(InitialStateKind::Polaritonic);
    let mut snap = build_initial_state(&spec, &params, &grid, &bo_set, Some(&pol_set)).unwrap();
    let prop = Propagator::for_model(&params, &grid, 0.1).unwrap();
    let mut stencil = Vec::new();
    for step in 0..=10 {
        if step == 0 || step == 5 || step == 10 {
            let mut s = snap.clone();
            s.time_au = 0.1 * step as f64;
            stencil.push(s);
        }
        if step < 10 { prop.step(&mut snap); }
    }
    let center = &stencil[1];
    let rho = nuclear_density(center);
    let mask = ValidityMask::from_density(&rho, DENSITY_THRESHOLD_REL);
    let reference = mask.leftmost().unwrap();
    let (w, _) = nuclear_derivative_moments(center);
    let phase = nuclear_phase(&w, &rho, &mask, reference, &grid.nuc).unwrap();
    let nwc = NuclearWavefunction {
        grid: grid.nuc.clone(), time_au: center.time_au,
        density: rho.clone(), phase: phase.clone(), reference_index: reference, mask: mask.clone(),
    };
    let cond = conditional(center, &nwc).unwrap();

    // S profile and S' consistency
    let h = grid.nuc.spacing();
    let (a, b) = mask.segments()[0];
    println!("mask segment [{a},{b}]  R in [{:.2},{:.2}]  S range [{:.3e},{:.3e}]",
        grid.nuc.point(a), grid.nuc.point(b),
        phase[a..=b].iter().cloned().fold(f64::INFINITY, f64::min),
        phase[a..=b].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let s_fd = fd_derivative(&phase[a..=b], h);
    let mut worst_sp = (0.0_f64, 0usize);
    for (k, j) in (a..=b).enumerate() {
        let target = w[j].im / rho[j];
        let d = (s_fd[k] - target).abs();
        if d > worst_sp.0 { worst_sp = (d, j); }
    }
    println!("S'(fd) vs Im(w)/rho worst: {:.3e} at j={} R={:.2}", worst_sp.0, worst_sp.1, grid.nuc.point(worst_sp.1));

    // Phi-level FD gauge field per j: find where it blows up
    let (n_r, n_q) = (grid.r.n(), grid.q.n());
    let block_len = n_r * n_q;
    let wq = grid.r.spacing() * grid.q.spacing();
    let seg_len = b - a + 1;
    let mut a_field = vec![0.0_f64; seg_len];
    let mut char_deriv = vec![0.0_f64; seg_len]; // ||fd(Phi)||^2 per j
    let mut lane_re = vec![0.0_f64; seg_len];
    let mut lane_im = vec![0.0_f64; seg_len];
    for comp in 0..block_len {
        for (k, j) in (a..=b).enumerate() {
            let v = cond.values[j * block_len + comp];
            lane_re[k] = v.re;
            lane_im[k] = v.im;
        }
        let dre = fd_derivative(&lane_re, h);
        let dim = fd_derivative(&lane_im, h);
        for k in 0..seg_len {
            let c = Complex64::new(lane_re[k], lane_im[k]);
            let d = Complex64::new(dre[k], dim[k]);
            a_field[k] += (c.conj() * d).im;
            char_deriv[k] += d.norm_sqr();
        }
    }
    let mut worst = (0.0_f64, 0usize);
    for k in 0..seg_len {
        let v = (a_field[k] * wq).abs();
        if v > worst.0 { worst = (v, a + k); }
    }
    println!("Phi-FD gauge field worst: {:.3e} at j={} R={:.2}", worst.0, worst.1, grid.nuc.point(worst.1));
    for k in 0..seg_len {
        let j = a + k;
        println!("  j={j} R={:+.2} rho={:.2e} A={:+.3e} ||dPhi||^2={:.3e} eps_ratio={:.2e}",
            grid.nuc.point(j), rho[j], a_field[k] * wq, char_deriv[k] * wq,
            rho[j] / peak_of(&rho));
    }

    fn peak_of(v: &[f64]) -> f64 { v.iter().cloned().fold(0.0, f64::max) }
}

#[test]
fn diag_chi_square_seed_scan() {
    use cavidyn::qcl::{wigner_sample, WignerSpec};
    use cavidyn::special;
    let chi = |samples: &[f64], mean: f64, sigma: f64| -> f64 {
        let n_bins = 30usize;
        let z_max = 3.5_f64;
        let mut observed = vec![0.0_f64; n_bins + 2];
        for &s in samples {
            let z = (s - mean) / sigma;
            let idx = if z < -z_max { 0 } else if z >= z_max { n_bins + 1 }
                else { 1 + ((z + z_max) / (2.0 * z_max) * n_bins as f64) as usize };
            observed[idx.min(n_bins + 1)] += 1.0;
        }
        let phi = |z: f64| 0.5 * (1.0 + special::erf(z / std::f64::consts::SQRT_2));
        let n = samples.len() as f64;
        let mut chi2 = 0.0;
        for (b, &obs) in observed.iter().enumerate() {
            let p = if b == 0 { phi(-z_max) }
                else if b == n_bins + 1 { 1.0 - phi(z_max) }
                else {
                    let w = 2.0 * z_max / n_bins as f64;
                    phi(-z_max + b as f64 * w) - phi(-z_max + (b - 1) as f64 * w)
                };
            let e = n * p;
            chi2 += (obs - e).powi(2) / e;
        }
        chi2
    };
    for seed in 0..10u64 {
        let spec = WignerSpec { center: -4.0, alpha: 2.85, n_traj: 100_000, seed };
        let samples = wigner_sample(&spec).unwrap();
        let rs: Vec<f64> = samples.iter().map(|&(r, _)| r).collect();
        let ps: Vec<f64> = samples.iter().map(|&(_, p)| p).collect();
        println!("seed {seed}: chi2_R = {:.2}  chi2_P = {:.2}", chi(&rs, -4.0, spec.position_sigma()), chi(&ps, 0.0, spec.momentum_sigma()));
    }
}

#[test]
#[ignore]
fn diag_pcet_coarse_rehearsal() {
    use cavidyn::efactor::{extend_masked, l1_density_distance, repropagate_nuclear, energy_audit};
    use cavidyn::qcl::{kde_density, propagate_ensemble, wigner_sample, ForceField, SurfaceChoice, WignerSpec};
    use cavidyn::scenario::*;
    use cavidyn::propagator::Propagator;
    use cavidyn::AU_PER_FS;
    use std::time::Instant;

    let t0 = Instant::now();
    let spec = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::Factorized, Profile::Coarse);
    let run = run_in_cavity(&spec, true).unwrap();
    println!("FACTORIZED coarse wall = {:.1} s", t0.elapsed().as_secs_f64());
    let first = &run.series.records[0];
    let mut max_de: f64 = 0.0;
    let mut max_dn: f64 = 0.0;
    for r in &run.series.records {
        max_de = max_de.max((r.energy - first.energy).abs());
        max_dn = max_dn.max((r.norm - 1.0).abs());
    }
    println!("max |norm-1| = {max_dn:.3e}   max |E-E0| = {max_de:.3e}   E0 = {:.6}", first.energy);
    println!("frames = {}", run.frames.len());
    let mut pn: f64 = 0.0; let mut rec_max: f64 = 0.0;
    for f in &run.frames {
        pn = pn.max(f.partial_norm_max_err);
        rec_max = rec_max.max(f.reconstruction_max_err);
    }
    println!("pnorm={pn:.3e} recon={rec_max:.3e}");
    println!("per-frame series (t_fs, gauge, route, stencil, frag):");
    for f in &run.frames {
        let t_fs = f.nuclear.time_au / AU_PER_FS;
        if (t_fs / 2.0).fract() > 0.05 && (t_fs / 2.0).fract() < 0.95 && !f.fragmented { continue; }
        println!("  {t_fs:6.2}  g={:.2e}  r={:.2e}  s={:.2}  {}", f.gauge_residual_max, f.wpol_route_gap, f.stencil_ratio, if f.fragmented { "FRAG" } else { "" });
    }

    // Energy audits at analysis times.
    let prop = Propagator::for_model(&spec.params, &run.surfaces.grid, spec.dt).unwrap();
    for snap in &run.analysis_snapshots {
        let t_fs = snap.time_au / AU_PER_FS;
        let frame = run.frame_near(t_fs).unwrap();
        let etot = prop.engine().total_energy(&snap.amplitudes).unwrap();
        let audit = energy_audit(snap, frame, etot).unwrap();
        println!("audit t={t_fs:7.3}: closure={:.3e} closure_fd={:.3e} e_gd={:+.4e}", audit.closure_gap, audit.closure_gap_fd, audit.e_gd);
    }

    // Repropagation L1 series over [0, 26 fs].
    let tr = Instant::now();
    let timeline: Vec<(f64, Vec<f64>)> = run.frames.iter()
        .map(|f| (f.nuclear.time_au, extend_masked(&f.record.eps_total, &f.record.mask, &f.record.grid).0))
        .collect();
    let chi0 = &run.frames[0].nuclear;
    let grid_n = chi0.grid.clone();
    let store: Vec<f64> = run.frames.iter().map(|f| f.nuclear.time_au).filter(|&t| t <= 26.0 * AU_PER_FS).collect();
    let reprop = repropagate_nuclear(chi0, spec.params.mass, &timeline, spec.dt, &store).unwrap();
    let mut l1_max: f64 = 0.0;
    println!("reprop L1 series (wall {:.1} s):", tr.elapsed().as_secs_f64());
    for (t, rho) in &reprop {
        let t_fs = t / AU_PER_FS;
        let f = run.frame_near(t_fs).unwrap();
        let l1 = l1_density_distance(rho, &f.nuclear.density, &grid_n).unwrap();
        l1_max = l1_max.max(l1);
        if (t_fs / 2.0).fract() > 0.05 && (t_fs / 2.0).fract() < 0.95 && t_fs > 0.3 { continue; }
        println!("  {t_fs:6.2}  L1={l1:.4}");
    }
    println!("reprop L1 max = {l1_max:.4}");

    // Trajectories on full vs wpol surfaces.
    let wig = WignerSpec { center: spec.initial.center, alpha: spec.initial.alpha, n_traj: 3000, seed: 1 };
    let ens = wigner_sample(&wig).unwrap();
    let recs: Vec<_> = run.frames.iter().map(|f| &f.record).collect();
    let store_t: Vec<f64> = run.frames.iter().map(|f| f.nuclear.time_au).filter(|&t| t >= 10.0 * AU_PER_FS).collect();
    for choice in [SurfaceChoice::Full, SurfaceChoice::WeightedPolaritonic] {
        let field = ForceField::from_records(recs.iter().copied(), choice).unwrap();
        let hist = propagate_ensemble(&ens, spec.params.mass, &field, 0.25, field.t_start(), &store_t).unwrap();
        let mut l1s = Vec::new();
        for (si, &st) in hist.times.iter().enumerate() {
            let f = run.frame_near(st / AU_PER_FS).unwrap();
            let kde = kde_density(&hist.positions[si], &grid_n, None).unwrap();
            l1s.push(l1_density_distance(&kde, &f.nuclear.density, &grid_n).unwrap());
        }
        let show: Vec<String> = l1s.iter().step_by(10).map(|x| format!("{x:.3}")).collect();
        let si = hist.times.len() - 1;
        let below = hist.positions[si].iter().filter(|&&x| x < -1.0).count() as f64 / hist.positions[si].len() as f64;
        println!("qcl {choice:?}: l1 from 10fs every 5fs = {show:?}  trapped(end)={below:.3} clamped={:.4}", hist.clamped_time_fraction);
        let full_kde = kde_density(&hist.positions[si], &grid_n, None).unwrap();
        let pre_kde = kde_density(&hist.positions[si][..2000].to_vec(), &grid_n, None).unwrap();
        println!("  2000-vs-3000 L1 at end = {:.4}", l1_density_distance(&full_kde, &pre_kde, &grid_n).unwrap());
    }

    // Trapped fraction of the exact run at 35.8 fs.
    let f358 = run.frame_near(35.8).unwrap();
    println!("trapped(factorized, exact) = {:.4}", trapped_fraction(&f358.nuclear.density, &grid_n, -1.0));

    // Polaritonic coarse run: trapped fraction + early-time force anchors.
    let t2 = Instant::now();
    let spec_p = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::Polaritonic, Profile::Coarse);
    let run_p = run_in_cavity(&spec_p, true).unwrap();
    println!("POLARITONIC coarse wall = {:.1} s", t2.elapsed().as_secs_f64());
    let fp = run_p.frame_near(35.8).unwrap();
    println!("trapped(polaritonic, exact) = {:.4}", trapped_fraction(&fp.nuclear.density, &grid_n, -1.0));
    for t_probe in [2.0, 3.39, 4.5] {
        let f = run_p.frame_near(t_probe).unwrap();
        let rho = &f.nuclear.density;
        let w2 = |v: &[f64]| v.iter().zip(rho).map(|(x, &d)| d * x * x).sum::<f64>().sqrt();
        let u2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("  t={t_probe:5.2}: weighted gd/total = {:.4}   unweighted = {:.4}",
            w2(&f.record.force_gd) / w2(&f.record.force_total),
            u2(&f.record.force_gd) / u2(&f.record.force_total));
    }
    for (tag, f) in [("fact 17.42", run.frame_near(17.42).unwrap()), ("pol 21.29", run_p.frame_near(21.29).unwrap())] {
        let pts = grid_n.points();
        let mut crossings = Vec::new();
        for j in 1..pts.len() {
            if pts[j] < -3.0 || pts[j - 1] > -1.0 { continue; }
            let (a, b) = (f.record.force_total[j - 1], f.record.force_total[j]);
            if a == 0.0 || b == 0.0 { continue; }
            if a * b < 0.0 { crossings.push(pts[j - 1]); }
        }
        println!("{tag}: sign changes in [-3,-1]: {crossings:?}");
    }

    // Cavity-free reference: trapped fraction.
    let t3 = Instant::now();
    let spec_f = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::CavityFree, Profile::Coarse);
    let run_f = run_cavity_free(&spec_f).unwrap();
    println!("CAVITY-FREE coarse wall = {:.1} s", t3.elapsed().as_secs_f64());
    let (_, rho_f) = run_f.nuclear_densities.last().unwrap();
    println!("trapped(cavity-free) = {:.6}", trapped_fraction(rho_f, &run_f.grid.nuc, -1.0));
    println!("TOTAL wall = {:.1} s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn diag_elex_coarse_rehearsal() {
    use cavidyn::scenario::*;
    use std::time::Instant;
    let t0 = Instant::now();
    let spec = ScenarioSpec::preset_default(Preset::Elex, ScenarioKind::Factorized, Profile::Coarse);
    let run = run_in_cavity(&spec, true).unwrap();
    println!("ELEX factorized coarse wall = {:.1} s", t0.elapsed().as_secs_f64());
    let first = &run.series.records[0];
    let max_de = run.series.records.iter().map(|r| (r.energy - first.energy).abs()).fold(0.0f64, f64::max);
    println!("max |E-E0| = {max_de:.3e}; frames = {}", run.frames.len());
    // third-surface population max.
    let mut max_c2 = 0.0f64; let mut t_at = 0.0;
    for r in &run.series.records {
        if r.bo_populations.len() > 2 && r.bo_populations[2] > max_c2 { max_c2 = r.bo_populations[2]; t_at = r.time_au; }
    }
    println!("in-cavity max |C2|^2 = {max_c2:.5} at t = {:.2} fs", t_at / cavidyn::AU_PER_FS);
    let mut g_max: f64 = 0.0; let mut frag = 0;
    for f in &run.frames { g_max = g_max.max(f.gauge_residual_max); if f.fragmented { frag += 1; } }
    println!("gauge={g_max:.3e} fragmented={frag}");

    let t1 = Instant::now();
    let spec_f = ScenarioSpec::preset_default(Preset::Elex, ScenarioKind::CavityFree, Profile::Coarse);
    let run_f = run_cavity_free(&spec_f).unwrap();
    println!("ELEX cavity-free coarse wall = {:.1} s", t1.elapsed().as_secs_f64());
    let mut max_c2f = 0.0f64;
    for r in &run_f.series.records {
        if r.bo_populations.len() > 2 { max_c2f = max_c2f.max(r.bo_populations[2]); }
    }
    println!("cavity-free max |C2|^2 = {max_c2f:.6}; ratio = {:.2}", max_c2 / max_c2f.max(1e-300));
}

#[test]
#[ignore]
fn diag_cavity_free_probe() {
    use cavidyn::scenario::*;
    use cavidyn::AU_PER_FS;
    use rustfft::{num_complex::Complex, FftPlanner};
    use std::time::Instant;

    for profile in [Profile::Coarse, Profile::Default] {
        let t0 = Instant::now();
        let mut spec = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::CavityFree, profile);
        spec.analysis_times_fs = vec![35.8];
        let run = run_cavity_free(&spec).unwrap();
        println!("== cavity-free {} wall = {:.1} s", profile.name(), t0.elapsed().as_secs_f64());
        // trapped + <R> trace
        for (t, rho) in run.nuclear_densities.iter() {
            let t_fs = t / AU_PER_FS;
            let frac = (t_fs / 5.0).fract();
            if frac > 0.02 && frac < 0.98 && (t_fs - 35.8).abs() > 0.05 { continue; }
            let pts = run.grid.nuc.points();
            let h = run.grid.nuc.spacing();
            let mean_r: f64 = pts.iter().zip(rho).map(|(&x, &d)| x * d).sum::<f64>() * h;
            println!("  t={t_fs:6.2} fs  trapped={:.4}  <R>={mean_r:+.3}", trapped_fraction(rho, &run.grid.nuc, -1.0));
        }
        // BO populations at end
        let last = run.series.records.last().unwrap();
        println!("  final pops = {:?}", last.bo_populations.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>());
        // nuclear momentum spectrum of the final snapshot: aliasing check
        let snap = &run.final_state;
        let (n_r, n_nuc) = (run.grid.r.n(), run.grid.nuc.n());
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_nuc);
        let mut spec_k = vec![0.0f64; n_nuc];
        let mut lane: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_nuc];
        for ir in 0..n_r {
            for j in 0..n_nuc {
                let a = snap.amplitudes[ir * n_nuc + j];
                lane[j] = Complex::new(a.re, a.im);
            }
            fft.process(&mut lane);
            for j in 0..n_nuc {
                spec_k[j] += lane[j].norm_sqr();
            }
        }
        let total: f64 = spec_k.iter().sum();
        let h = run.grid.nuc.spacing();
        let kmax = std::f64::consts::PI / h;
        // fraction of momentum density in the top 15% of |k|
        let edge: f64 = (0..n_nuc)
            .filter(|&j| {
                let k = if j <= n_nuc / 2 { j as f64 } else { j as f64 - n_nuc as f64 } * 2.0 * std::f64::consts::PI / (n_nuc as f64 * h);
                k.abs() > 0.85 * kmax
            })
            .map(|j| spec_k[j])
            .sum::<f64>() / total;
        // mean |k| and 99.9% quantile
        let mut pairs: Vec<(f64, f64)> = (0..n_nuc)
            .map(|j| {
                let k = if j <= n_nuc / 2 { j as f64 } else { j as f64 - n_nuc as f64 } * 2.0 * std::f64::consts::PI / (n_nuc as f64 * h);
                (k.abs(), spec_k[j] / total)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        let mut k999 = 0.0;
        for (k, w) in &pairs {
            acc += w;
            if acc >= 0.999 {
                k999 = *k;
                break;
            }
        }
        println!("  k_max(grid)={kmax:.1}  k at 99.9% = {k999:.1}  edge-band weight = {edge:.2e}");
    }
}

#[test]
#[ignore]
fn diag_factorized_series_probe() {
    use cavidyn::efactor::{extend_masked, l1_density_distance, repropagate_nuclear};
    use cavidyn::qcl::{kde_density, propagate_ensemble, wigner_sample, ForceField, SurfaceChoice, WignerSpec};
    use cavidyn::scenario::*;
    use cavidyn::AU_PER_FS;
    use std::time::Instant;

    let t0 = Instant::now();
    let spec = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::Factorized, Profile::Coarse);
    let run = run_in_cavity(&spec, true).unwrap();
    println!("factorized coarse wall = {:.1} s, frames = {}", t0.elapsed().as_secs_f64(), run.frames.len());

    println!("per-frame series (t_fs, gauge, route, stencil, frag):");
    for f in &run.frames {
        let t_fs = f.nuclear.time_au / AU_PER_FS;
        if (t_fs * 2.0).fract() > 0.05 && (t_fs * 2.0).fract() < 0.95 { continue; }
        println!("  {t_fs:6.2}  g={:.2e}  r={:.2e}  s={:.2}  {}", f.gauge_residual_max, f.wpol_route_gap, f.stencil_ratio, if f.fragmented { "FRAG" } else { "" });
    }

    // reprop L1 series using every frame <= 26 fs as store point
    let timeline: Vec<(f64, Vec<f64>)> = run.frames.iter()
        .map(|f| (f.nuclear.time_au, extend_masked(&f.record.eps_total, &f.record.mask, &f.record.grid).0))
        .collect();
    let chi0 = &run.frames[0].nuclear;
    let grid_n = chi0.grid.clone();
    let store: Vec<f64> = run.frames.iter().map(|f| f.nuclear.time_au).filter(|&t| t <= 26.0 * AU_PER_FS).collect();
    let reprop = repropagate_nuclear(chi0, spec.params.mass, &timeline, spec.dt, &store).unwrap();
    println!("reprop L1 series:");
    for (t, rho) in &reprop {
        let t_fs = t / AU_PER_FS;
        let f = run.frame_near(t_fs).unwrap();
        let l1 = l1_density_distance(rho, &f.nuclear.density, &grid_n).unwrap();
        if (t_fs * 0.5).fract() > 0.05 && (t_fs * 0.5).fract() < 0.95 && t_fs > 0.3 { continue; }
        println!("  {t_fs:6.2}  L1={l1:.4}");
    }

    // qcl: trapped fractions of ensembles at end + 2000-vs-3000 prefix check
    let wig = WignerSpec { center: spec.initial.center, alpha: spec.initial.alpha, n_traj: 3000, seed: 1 };
    let ens = wigner_sample(&wig).unwrap();
    let recs: Vec<_> = run.frames.iter().map(|f| &f.record).collect();
    let store_t: Vec<f64> = run.frames.iter().map(|f| f.nuclear.time_au).filter(|&t| t >= 10.0 * AU_PER_FS).collect();
    for choice in [SurfaceChoice::Full, SurfaceChoice::WeightedPolaritonic] {
        let field = ForceField::from_records(recs.iter().copied(), choice).unwrap();
        let hist = propagate_ensemble(&ens, spec.params.mass, &field, 0.25, field.t_start(), &store_t).unwrap();
        let si = hist.times.len() - 1;
        let below = hist.positions[si].iter().filter(|&&x| x < -1.0).count() as f64 / hist.positions[si].len() as f64;
        println!("qcl {choice:?}: trapped(end)={below:.3} clamped={:.4}", hist.clamped_time_fraction);
        // prefix check at the last store time
        let full_kde = kde_density(&hist.positions[si], &grid_n, None).unwrap();
        let pre: Vec<f64> = hist.positions[si][..2000].to_vec();
        let pre_kde = kde_density(&pre, &grid_n, None).unwrap();
        println!("  2000-vs-3000 L1 at end = {:.4}", l1_density_distance(&full_kde, &pre_kde, &grid_n).unwrap());
    }
    println!("TOTAL wall = {:.1} s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn diag_polaritonic_force_probe() {
    use cavidyn::scenario::*;
    use std::time::Instant;
    let t0 = Instant::now();
    let spec = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::Polaritonic, Profile::Coarse);
    let run = run_in_cavity(&spec, true).unwrap();
    println!("polaritonic coarse wall = {:.1} s", t0.elapsed().as_secs_f64());
    for t_probe in [2.0, 3.39, 4.5] {
        let f = run.frame_near(t_probe).unwrap();
        let rho = &f.nuclear.density;
        let w2 = |v: &[f64]| v.iter().zip(rho).map(|(x, &d)| d * x * x).sum::<f64>().sqrt();
        let u2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "t={t_probe:5.2}: weighted gd/total = {:.4}   unweighted = {:.4}",
            w2(&f.record.force_gd) / w2(&f.record.force_total),
            u2(&f.record.force_gd) / u2(&f.record.force_total)
        );
    }
}

#[test]
#[ignore]
fn diag_rabi_frozen_constant() {
    use cavidyn::bo::solve_bo;
    use cavidyn::grid::Grid1D;
    use cavidyn::model::Preset;
    use cavidyn::polariton::solve_polaritonic_surfaces;
    let params = Preset::Pcet.params();
    let r = Grid1D::new(-30.0, 30.0, 192).unwrap();
    let nuc = Grid1D::new(-9.0, 9.0, 181).unwrap();
    let bo = solve_bo(&params, &r, &nuc, 6).unwrap();
    let pol = solve_polaritonic_surfaces(&bo, &params, 6, 6).unwrap();
    let pts = nuc.points();
    let mut min_gap = f64::INFINITY;
    let mut at = 0.0;
    for j in 0..nuc.n() {
        let gap = pol.energies[[j, 1]] - pol.energies[[j, 0]];
        if gap < min_gap {
            min_gap = gap;
            at = pts[j];
        }
    }
    println!("PCET polaritonic min gap E1-E0 = {min_gap:.12e} at R = {at:.3}");
    // quarter-strength motion dipoles: what the same measurement yields
    let mut broken = bo.clone();
    for v in broken.dipole_moments.iter_mut() {
        *v *= 0.25;
    }
    let pol_b = solve_polaritonic_surfaces(&broken, &params, 6, 6).unwrap();
    let mut min_b = f64::INFINITY;
    for j in 0..nuc.n() {
        min_b = min_b.min(pol_b.energies[[j, 1]] - pol_b.energies[[j, 0]]);
    }
    println!("with dipoles x0.25: min gap = {min_b:.6e}  (rel change {:.3})", (min_b - min_gap) / min_gap);
    let j4r = pts.iter().position(|&x| (x + 4.0).abs() < 1e-9).unwrap();
    let s_clean = pol.energies[[j4r, 2]] - pol.energies[[j4r, 1]];
    let s_broken = pol_b.energies[[j4r, 2]] - pol_b.energies[[j4r, 1]];
    println!("polariton splitting E2-E1 at R=-4: clean {s_clean:.12e}  broken {s_broken:.6e}  (rel change {:+.3})", (s_broken - s_clean) / s_clean);
    // BO gaps for the resonance checks, PCET
    let j4 = pts.iter().position(|&x| (x + 4.0).abs() < 1e-9).unwrap();
    println!("PCET BO gap at R=-4: {:.8}", bo.energies[[j4, 1]] - bo.energies[[j4, 0]]);
    let pe = Preset::Elex.params();
    let bo_e = solve_bo(&pe, &r, &nuc, 6).unwrap();
    for (x, hi, lo) in [(-2.2, 1, 0), (2.2, 1, 0), (0.0, 2, 0)] {
        let j = pts.iter().position(|&p| (p - x).abs() < 1e-9).unwrap();
        println!("ELEX BO E{hi}-E{lo} at R={x}: {:.8}", bo_e.energies[[j, hi]] - bo_e.energies[[j, lo]]);
    }
}
