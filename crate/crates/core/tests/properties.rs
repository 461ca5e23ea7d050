use bec_feedback::analysis::{phonon_occupancy, Mode};
use bec_feedback::controller::{Controller, ControllerConfig};
use bec_feedback::estimator::{density_estimate, frame_moments, nonlinear_filter, LowPass, RegionMask};
use bec_feedback::optics::{fresnel_image, linearized_image, tf_phase, GridSpec, ImageGrid, OpticsParams, PhaseParams};
use bec_feedback::plant::{actuator_to_signal, dipole_kick, step, PlantConfig, PlantState, SignalVector};
use bec_feedback::{ActuatorVector, MeasurementVector, TransferMatrix};
use proptest::prelude::*;

const UM: f64 = 1e-6;
const TAU: f64 = 1e-3;

fn grid() -> GridSpec {
    GridSpec::default()
}

fn moments_of(phase: &PhaseParams) -> (f64, f64) {
    let g = grid();
    let opt = OpticsParams::default();
    let img = linearized_image(&tf_phase(phase, &g), &opt).unwrap();
    let reference = ImageGrid::filled(g, 1.0);
    let mask = RegionMask::with_margin(g, 0.15).unwrap();
    let rho = density_estimate(&img, &reference, &mask)
        .unwrap()
        .map(|v| v * opt.k / opt.xi);
    let m = frame_moments(&nonlinear_filter(&rho), &mask, 0.0).unwrap();
    (m.mean_x, m.mean_z)
}

fn phase_params() -> impl Strategy<Value = PhaseParams> {
    (
        -0.15f64..0.15,
        10.0f64..30.0,
        3.0f64..10.0,
        -10.0f64..10.0,
        -10.0f64..10.0,
    )
        .prop_map(|(phi0, rx, rz, x0, z0)| PhaseParams {
            phi0,
            r_x: rx * UM,
            r_z: rz * UM,
            x0: x0 * UM,
            z0: z0 * UM,
        })
}

fn actuator() -> impl Strategy<Value = ActuatorVector> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(ActuatorVector::from_array)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimator_is_unbiased_at_subpixel_offsets(fx in -1.0f64..1.0, fz in -1.0f64..1.0) {
        let pitch = grid().pitch;
        let p = PhaseParams { x0: fx * pitch, z0: fz * pitch, ..PhaseParams::default() };
        let (x, z) = moments_of(&p);
        prop_assert!((x - p.x0).abs() <= 0.1 * pitch, "x {} vs {}", x, p.x0);
        prop_assert!((z - p.z0).abs() <= 0.1 * pitch, "z {} vs {}", z, p.z0);
    }

    #[test]
    fn signal_map_is_linear(u1 in actuator(), u2 in actuator(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = TransferMatrix::nominal();
        let lhs = actuator_to_signal(&ActuatorVector::from_array(std::array::from_fn(|i| {
            a * u1.to_array()[i] + b * u2.to_array()[i]
        })), &g).to_array();
        let (s1, s2) = (actuator_to_signal(&u1, &g).to_array(), actuator_to_signal(&u2, &g).to_array());
        for i in 0..3 {
            let rhs = a * s1[i] + b * s2[i];
            let scale = (a * s1[i]).abs() + (b * s2[i]).abs();
            prop_assert!((lhs[i] - rhs).abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn free_evolution_conserves_mode_energy(
        d in prop::array::uniform3(-10.0f64..10.0),
        v in prop::array::uniform3(-1.0f64..1.0),
        trap in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let cfg = PlantConfig::default();
        let trap = SignalVector::new(trap[0] * UM, trap[1] * UM, 0.05 * trap[2] / 5.0 * cfg.trap.omega_x.powi(2));
        let eq = cfg.equilibrium(&trap);
        let mut s = PlantState {
            x: eq[0] + d[0] * UM,
            z: eq[1] + d[1] * UM,
            w: eq[2] + d[2] * UM,
            vx: v[0] * 1e-3,
            vz: v[1] * 1e-3,
            vw: v[2] * 1e-3,
            trap,
            t: 0.0,
        };
        let e0 = s.mode_energies(&cfg);
        for _ in 0..150 {
            s = step(&cfg, &s, trap, TAU).unwrap();
        }
        let e1 = s.mode_energies(&cfg);
        for i in 0..3 {
            prop_assert!(close(e0[i], e1[i], 1e-10), "mode {} {} -> {}", i, e0[i], e1[i]);
        }
    }

    #[test]
    fn trap_shift_equals_opposite_atom_displacement(dx in -10.0f64..10.0, dz in -10.0f64..10.0) {
        let cfg = PlantConfig::default();
        let delta = SignalVector::new(dx * UM, dz * UM, 0.0);
        let shift = cfg.equilibrium(&delta);
        let rest = cfg.equilibrium(&SignalVector::ZERO);
        let mut a = dipole_kick(&PlantState::at_rest(&cfg), delta);
        let mut b = PlantState::at_rest(&cfg);
        b.x -= shift[0] - rest[0];
        b.z -= shift[1] - rest[1];
        for _ in 0..100 {
            a = step(&cfg, &a, a.trap, TAU).unwrap();
            b = step(&cfg, &b, b.trap, TAU).unwrap();
            prop_assert!(((a.x - (shift[0] - rest[0])) - b.x).abs() < 1e-17);
            prop_assert!(((a.z - (shift[1] - rest[1])) - b.z).abs() < 1e-17);
            prop_assert!((a.vx - b.vx).abs() < 1e-15 && (a.vz - b.vz).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_pupil_fresnel_conserves_power(p in phase_params(), xi in 50.0f64..2000.0) {
        let g = GridSpec::square(64, grid().pitch);
        let opt = OpticsParams { xi: xi * UM, eta: 0.0, ..OpticsParams::default() };
        let img = fresnel_image(&tf_phase(&p, &g), &opt).unwrap();
        prop_assert!(close(img.sum(), g.len() as f64, 1e-10), "sum {}", img.sum());
    }

    #[test]
    fn in_focus_phase_object_is_invisible(p in phase_params()) {
        let g = GridSpec::square(64, grid().pitch);
        let opt = OpticsParams { xi: 0.0, eta: 0.0, ..OpticsParams::default() };
        let img = fresnel_image(&tf_phase(&p, &g), &opt).unwrap();
        prop_assert!(img.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn even_phase_gives_even_intensity(p in phase_params(), xi in 50.0f64..2000.0) {
        let g = GridSpec::square(64, grid().pitch);
        let p = PhaseParams { x0: 0.0, z0: 0.0, ..p };
        let opt = OpticsParams { xi: xi * UM, ..OpticsParams::default() };
        let img = fresnel_image(&tf_phase(&p, &g), &opt).unwrap();
        let n = g.nx;
        for iz in 0..n {
            for ix in 0..n {
                let mirror = img.at((n - ix) % n, (n - iz) % n);
                prop_assert!((img.at(ix, iz) - mirror).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_frames_give_identical_estimates(p in phase_params()) {
        let g = grid();
        let img = linearized_image(&tf_phase(&p, &g), &OpticsParams::default()).unwrap();
        let mask = RegionMask::with_margin(g, 0.15).unwrap();
        let reference = ImageGrid::filled(g, 1.0);
        let m1 = frame_moments(&nonlinear_filter(&density_estimate(&img, &reference, &mask).unwrap()), &mask, 0.0).unwrap();
        let m2 = frame_moments(&nonlinear_filter(&density_estimate(&img.clone(), &reference, &mask).unwrap()), &mask, 0.0).unwrap();
        prop_assert_eq!(m1.mean_x.to_bits(), m2.mean_x.to_bits());
        prop_assert_eq!(m1.mean_z.to_bits(), m2.mean_z.to_bits());
        prop_assert_eq!(m1.var_x.to_bits(), m2.var_x.to_bits());
    }

    #[test]
    fn constant_contrast_offset_does_not_move_centroid(p in phase_params(), c in -0.3f64..0.3) {
        let g = grid();
        let opt = OpticsParams::default();
        let img = linearized_image(&tf_phase(&p, &g), &opt).unwrap();
        let reference = ImageGrid::from_fn(g, |x, z| 1.0 + 0.1 * (x / 200e-6).sin() * (z / 150e-6).cos());
        let frame = img.zip_map(&reference, |i, r| i * r).unwrap();
        let shifted = frame.zip_map(&reference, |f, r| f + c * r).unwrap();
        let mask = RegionMask::with_margin(g, 0.15).unwrap();
        let moments = |f: &ImageGrid| {
            let rho = density_estimate(f, &reference, &mask).unwrap().map(|v| v * opt.k / opt.xi);
            frame_moments(&nonlinear_filter(&rho), &mask, 0.0).unwrap()
        };
        let (a, b) = (moments(&frame), moments(&shifted));
        prop_assert!((a.mean_x - b.mean_x).abs() <= 1e-10 * g.pitch, "{} vs {}", a.mean_x, b.mean_x);
        prop_assert!((a.mean_z - b.mean_z).abs() <= 1e-10 * g.pitch, "{} vs {}", a.mean_z, b.mean_z);
    }

    #[test]
    fn sixth_power_keeps_mean_of_symmetric_density(
        ix in -20i32..20, iz in -10i32..10, sx in 5.0f64..25.0, sz in 3.0f64..10.0,
    ) {
        let g = grid();
        let (xc, zc) = (ix as f64 * g.pitch, iz as f64 * g.pitch);
        let rho = ImageGrid::from_fn(g, |x, z| {
            (-0.5 * (((x - xc) / (sx * UM)).powi(2) + ((z - zc) / (sz * UM)).powi(2))).exp()
        });
        let mask = RegionMask::boxed(g, 0.05, (xc, zc), 40.0 * UM, 20.0 * UM).unwrap();
        let plain = frame_moments(&rho, &mask, 0.0).unwrap();
        let filtered = frame_moments(&nonlinear_filter(&rho), &mask, 0.0).unwrap();
        prop_assert!((plain.mean_x - filtered.mean_x).abs() < 1e-9 * g.pitch);
        prop_assert!((plain.mean_z - filtered.mean_z).abs() < 1e-9 * g.pitch);
        prop_assert!((plain.mean_x - xc).abs() < 1e-9 * g.pitch);
    }

    #[test]
    fn integer_shift_moves_centroid_by_whole_pixels(p in phase_params(), dx in -6isize..6, dz in -4isize..4) {
        let g = grid();
        let rho = tf_phase(&p, &g);
        let mask = RegionMask::with_margin(g, 0.15).unwrap();
        let a = frame_moments(&nonlinear_filter(&rho), &mask, 0.0).unwrap();
        let b = frame_moments(&nonlinear_filter(&rho.roll(dx, dz)), &mask, 0.0).unwrap();
        prop_assert!((b.mean_x - a.mean_x - dx as f64 * g.pitch).abs() < 1e-9 * g.pitch);
        prop_assert!((b.mean_z - a.mean_z - dz as f64 * g.pitch).abs() < 1e-9 * g.pitch);
        prop_assert!((b.var_x - a.var_x).abs() <= 1e-9 * a.var_x);
    }

    #[test]
    fn low_pass_step_response_is_monotone(fc in 5.0f64..400.0, target in -5.0f64..5.0) {
        let mut lp = LowPass::new(fc, TAU);
        let mut prev = 0.0f64;
        for _ in 0..200 {
            let y = lp.update(target);
            prop_assert!((y - prev) * target.signum() >= 0.0);
            prop_assert!(y.abs() <= target.abs() * (1.0 + 1e-15));
            prev = y;
        }
        let mut held = LowPass::primed(fc, TAU, target);
        prop_assert_eq!(held.update(target), target);
    }

    #[test]
    fn constant_measurement_offset_changes_no_command(
        seq in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 2..40),
        offset in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let cfg = ControllerConfig { enable_time: 0.0, ..ControllerConfig::default() };
        let (mut a, mut b) = (Controller::new(cfg), Controller::new(cfg));
        for (i, m) in seq.iter().enumerate() {
            let t = i as f64 * TAU;
            let ma = MeasurementVector { x_hat: m[0] * UM, z_hat: m[1] * UM, w_hat: 10.0 * UM + m[2] * UM, w_z_hat: 0.0, t };
            let mb = MeasurementVector {
                x_hat: ma.x_hat + offset[0] * UM,
                z_hat: ma.z_hat + offset[1] * UM,
                w_hat: ma.w_hat + offset[2] * UM,
                ..ma
            };
            let (ua, ub) = (a.update(&ma).to_array(), b.update(&mb).to_array());
            let scale = ua.iter().fold(1e-6f64, |s, v| s.max(v.abs()));
            for k in 0..4 {
                prop_assert!((ua[k] - ub[k]).abs() <= 1e-8 * scale, "channel {} {} vs {}", k, ua[k], ub[k]);
            }
        }
    }

    #[test]
    fn pure_oscillation_splits_energy_between_terms(amp in 0.5f64..10.0, phase in 0.0f64..6.3) {
        let cfg = PlantConfig::default();
        for mode in [Mode::X, Mode::Z] {
            let (w, a) = (mode.omega(&cfg), mode.a_ho(&cfg));
            let r: Vec<f64> = (0..120).map(|i| amp * UM * (w * i as f64 * TAU + phase).cos()).collect();
            let n = phonon_occupancy(&r, None, w, TAU, a).unwrap();
            let expect = (amp * UM / a).powi(2) / 2.0;
            prop_assert!((n - expect).abs() / expect < 2.0 * (w * TAU).powi(2), "{:?} n {} vs {}", mode, n, expect);
        }
    }
}

#[test]
fn generating_parameters_are_the_coarse_grid_minimum() {
    let g = GridSpec::square(64, grid().pitch);
    let opt = OpticsParams::default();
    let truth = PhaseParams {
        x0: 1.3 * UM,
        z0: -0.7 * UM,
        ..PhaseParams::default()
    };
    let data = fresnel_image(&tf_phase(&truth, &g), &opt).unwrap();
    let t = truth.to_array();
    // Centres are perturbed on the scale of the matching radius.
    let scale = [t[0], t[1], t[2], t[1], t[2]];
    let steps = [-0.2, -0.1, 0.0, 0.1, 0.2];
    let mut best = (f64::INFINITY, [0usize; 5]);
    for code in 0..steps.len().pow(5) {
        let idx: [usize; 5] = std::array::from_fn(|j| code / steps.len().pow(j as u32) % steps.len());
        let p = PhaseParams::from_array(std::array::from_fn(|j| t[j] + steps[idx[j]] * scale[j].abs()));
        let model = fresnel_image(&tf_phase(&p, &g), &opt).unwrap();
        let r2: f64 = model.data.iter().zip(&data.data).map(|(m, d)| (m - d).powi(2)).sum();
        if r2 < best.0 {
            best = (r2, idx);
        }
    }
    assert_eq!(best.1, [2; 5], "minimum at {:?} with residual {:e}", best.1, best.0);
    assert_eq!(best.0, 0.0);
}
