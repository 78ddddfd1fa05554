use dynact::elastic::{classify_nodes, fill_ghost, Domain, EllipseDomain, Field};
use dynact::geometry::linspace;
use dynact::motion::{perturb, sample_boundary, sparsify, BoundaryLoop, DeformationProvider, NoiseCorrelation};
use dynact::phantom::{AffineMotion, Breathing, Ellipse, PhantomSpec};
use dynact::projection::{radon_ellipse, simulate_scan, transform_line, ScanGeometry};
use dynact::recon::{reconstruct, FilterSpec, ImageSpec, RowFilter};
use dynact::{Mat2, Vec2};
use proptest::prelude::*;

fn breathing() -> impl Strategy<Value = Breathing> {
    (0.0..0.1f64, 0.01..0.1f64, 0.85..1.1f64, -0.3..0.3f64).prop_map(|(amplitude, frequency, offset, drift_coeff)| {
        Breathing {
            amplitude,
            frequency,
            offset,
            drift_coeff,
        }
    })
}

fn point() -> impl Strategy<Value = Vec2> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn invertible() -> impl Strategy<Value = Mat2> {
    (0.3..2.0f64, 0.3..2.0f64, -3.2..3.2f64, -0.5..0.5f64).prop_map(|(a, b, rot, shear)| {
        let (s, c) = rot.sin_cos();
        let r = Mat2([[c, -s], [s, c]]);
        let d = Mat2([[a, shear], [0.0, b]]);
        let m = |p: &Mat2, q: &Mat2| {
            let mut out = [[0.0; 2]; 2];
            for (i, row) in out.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = p.0[i][0] * q.0[0][j] + p.0[i][1] * q.0[1][j];
                }
            }
            Mat2(out)
        };
        m(&r, &d)
    })
}

fn ellipse() -> impl Strategy<Value = Ellipse> {
    (point(), 0.05..0.5f64, 0.05..0.5f64, -3.2..3.2f64, -2.0..2.0f64)
        .prop_map(|(c, a, b, rot, rho)| Ellipse::new(0.4 * c, Vec2::new(a, b), rot, rho))
}

fn small_geometry(num_angles: usize, num_detectors: usize) -> ScanGeometry {
    let mut g = ScanGeometry::standard();
    g.num_angles = num_angles;
    g.num_detectors = num_detectors;
    g.time_map.step = g.time_map.step * 660.0 / num_angles as f64;
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn motion_is_identity_at_time_zero(p in breathing(), x in point()) {
        let m = AffineMotion::Breathing(Breathing { offset: 1.0 - p.amplitude, ..p });
        let y = m.phi(0.0, x);
        prop_assert!((y - x).norm() <= 1e-15 * (1.0 + x.norm()));
    }

    #[test]
    fn inverse_undoes_motion(p in breathing(), t in 0.0..400.0f64, x in point()) {
        let m = AffineMotion::Breathing(p);
        let back = m.phi_inverse(t, m.phi(t, x)).unwrap();
        prop_assert!((back - x).norm() <= 1e-12);
        let fwd = m.phi(t, m.phi_inverse(t, x).unwrap());
        prop_assert!((fwd - x).norm() <= 1e-12);
    }

    #[test]
    fn breathing_preserves_area(p in breathing(), t in 0.0..400.0f64) {
        let m = AffineMotion::Breathing(p);
        prop_assert!((m.jacobian_det(t) - 1.0).abs() <= 1e-14);
        let (a, _) = m.affine(t);
        prop_assert!((a.det() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn transformed_line_holds_moved_points(
        a in invertible(),
        b in point(),
        alpha in 0.0..std::f64::consts::TAU,
        y in -1.0..1.0f64,
        r in -2.0..2.0f64,
    ) {
        let theta = Vec2::from_angle(alpha);
        let line = transform_line(&a, b, theta, y).unwrap();
        prop_assert!((line.omega.norm() - 1.0).abs() <= 1e-14);
        let x = line.s * line.omega + r * line.omega.perp();
        let z = a.apply(x) + b;
        prop_assert!((z.dot(theta) - y).abs() <= 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn ellipse_transform_is_even(e in ellipse(), alpha in 0.0..std::f64::consts::TAU, s in -1.0..1.0f64) {
        let fwd = radon_ellipse(&e, alpha, s);
        let back = radon_ellipse(&e, alpha + std::f64::consts::PI, -s);
        prop_assert!((fwd - back).abs() <= 1e-12 * (1.0 + fwd.abs()));
    }

    #[test]
    fn ellipse_transform_vanishes_off_support(e in ellipse(), alpha in 0.0..std::f64::consts::TAU) {
        let omega = Vec2::from_angle(alpha);
        let reach = e.center.dot(omega) + e.semi_axes.x.max(e.semi_axes.y) + 1e-9;
        prop_assert_eq!(radon_ellipse(&e, alpha, reach), 0.0);
        prop_assert_eq!(radon_ellipse(&e, alpha, reach + 0.5), 0.0);
    }

    #[test]
    fn breathing_scan_preserves_mass(e in ellipse(), p in breathing()) {
        let e = Ellipse::new(0.5 * e.center, 0.8 * e.semi_axes, e.rotation, e.density);
        // mass is the integral of every projection row
        let g = small_geometry(8, 801);
        let spec = PhantomSpec::new(vec![e.clone()]);
        let sino = simulate_scan(&spec, &AffineMotion::Breathing(p), &g).unwrap();
        let ds = g.detector_spacing();
        let mass = e.density * e.area();
        for row in sino.rows() {
            let total: f64 = row.iter().sum::<f64>() * ds;
            prop_assert!((total - mass).abs() <= 2e-3 * (1.0 + mass.abs()), "{} vs {}", total, mass);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scan_is_linear_in_the_phantom(e1 in ellipse(), e2 in ellipse(), p in breathing()) {
        let g = small_geometry(10, 33);
        let m = AffineMotion::Breathing(p);
        let both = simulate_scan(&PhantomSpec::new(vec![e1.clone(), e2.clone()]), &m, &g).unwrap();
        let a = simulate_scan(&PhantomSpec::new(vec![e1]), &m, &g).unwrap();
        let b = simulate_scan(&PhantomSpec::new(vec![e2]), &m, &g).unwrap();
        for i in 0..both.values.len() {
            prop_assert_eq!(both.values[i], a.values[i] + b.values[i]);
        }
    }

    #[test]
    fn filter_keeps_symmetric_rows_symmetric(half in proptest::collection::vec(-1.0..1.0f64, 33), wide in 1.0..4.0f64) {
        let g = small_geometry(4, 65);
        let mut row = half.clone();
        row.extend(half.iter().rev().skip(1));
        let spec = FilterSpec { gamma: wide * g.detector_spacing(), dft_size: 256 };
        let out = RowFilter::new(&spec, &g).unwrap().apply(&row).unwrap();
        let scale = out.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for m in 0..out.len() {
            prop_assert!((out[m] - out[out.len() - 1 - m]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn wider_filter_removes_more_energy(row in proptest::collection::vec(-1.0..1.0f64, 65), wide in 1.0..4.0f64) {
        let g = small_geometry(4, 65);
        let energy = |gamma: f64| {
            let spec = FilterSpec { gamma, dft_size: 256 };
            let out = RowFilter::new(&spec, &g).unwrap().apply_padded(&row).unwrap();
            out.iter().map(|v| v * v).sum::<f64>()
        };
        let dy = g.detector_spacing();
        prop_assert!(energy(wide * 1.5 * dy) <= energy(wide * dy) * (1.0 + 1e-12));
    }

    #[test]
    fn reconstruction_is_linear(
        a in proptest::collection::vec(-1.0..1.0f64, 8 * 17),
        b in proptest::collection::vec(-1.0..1.0f64, 8 * 17),
        alpha in -2.0..2.0f64,
    ) {
        let g = small_geometry(8, 17);
        let spec = ImageSpec { nx: 9, ny: 9, xmin: -1.0, xmax: 1.0, ymin: -1.0, ymax: 1.0 };
        let filter = FilterSpec::for_geometry(&g);
        let provider = DeformationProvider::Analytic(AffineMotion::default());
        let mut sa = dynact::projection::Sinogram::zeros(g);
        sa.values = a.clone();
        let mut sb = sa.clone();
        sb.values = b.clone();
        let mut sc = sa.clone();
        sc.values = a.iter().zip(&b).map(|(x, y)| x + alpha * y).collect();
        let ra = reconstruct(&sa, &provider, &filter, &spec).unwrap();
        let rb = reconstruct(&sb, &provider, &filter, &spec).unwrap();
        let rc = reconstruct(&sc, &provider, &filter, &spec).unwrap();
        let scale = ra.values.iter().chain(&rb.values).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..rc.values.len() {
            prop_assert!((rc.values[i] - ra.values[i] - alpha * rb.values[i]).abs() <= 1e-10 * scale * (1.0 + alpha.abs()));
        }
    }

    #[test]
    fn ghost_fill_is_exact_for_affine_fields(
        a in 0.4..0.95f64,
        b in 0.4..0.95f64,
        rot in 0.0..std::f64::consts::PI,
        n in 33usize..90,
        coef in proptest::collection::vec(-2.0..2.0f64, 6),
    ) {
        let domain = EllipseDomain::new(Ellipse::new(Vec2::ZERO, Vec2::new(a, b), rot, 1.0));
        let xs = linspace(-1.0, 1.0, n);
        let grid = classify_nodes(&xs, &xs, &domain, 0.5).unwrap();
        let f = |p: Vec2| Vec2::new(coef[0] + coef[1] * p.x + coef[2] * p.y, coef[3] + coef[4] * p.x + coef[5] * p.y);
        let mut field = Field::from_fn(&grid, f);
        let exact = field.clone();
        for g in &grid.ghosts {
            field.set(g.ghost, Vec2::new(1e3, -1e3));
        }
        fill_ghost(&grid, &mut field).unwrap();
        for g in &grid.ghosts {
            let err = (field.get(g.ghost) - exact.get(g.ghost)).norm();
            prop_assert!(err <= 1e-12, "ghost {} error {}", g.ghost, err);
        }
    }

    #[test]
    fn sparse_boundary_keeps_retained_nodes(count in 3usize..80, p in breathing()) {
        let domain = EllipseDomain::new(Ellipse::new(Vec2::ZERO, Vec2::new(0.8, 0.62), 0.0, 1.0));
        let xs = linspace(-1.0, 1.0, 41);
        let grid = classify_nodes(&xs, &xs, &domain, 0.5).unwrap();
        let times = [0.0, 10.0, 40.0];
        let exact = sample_boundary(&AffineMotion::Breathing(p), &grid, &times).unwrap();
        prop_assume!(count <= exact.num_nodes());
        let sparse = sparsify(&exact, count, &domain).unwrap();
        let lp = BoundaryLoop::new(&exact.positions, &domain);
        let kept = lp.equally_spaced(count);
        prop_assert!(kept.len() >= 3);
        for k in 0..times.len() {
            for &q in &kept {
                let node = lp.order[q];
                prop_assert_eq!(sparse.at(k)[node], exact.at(k)[node]);
            }
        }
        prop_assert_eq!(sparse.times, exact.times);
        prop_assert_eq!(sparse.positions, exact.positions);
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>(), std in 0.0..0.5f64, constant in any::<bool>()) {
        let domain = EllipseDomain::new(Ellipse::new(Vec2::ZERO, Vec2::new(0.8, 0.62), 0.0, 1.0));
        let xs = linspace(-1.0, 1.0, 25);
        let grid = classify_nodes(&xs, &xs, &domain, 0.5).unwrap();
        let exact = sample_boundary(&AffineMotion::default(), &grid, &[0.0, 5.0, 9.0]).unwrap();
        let corr = if constant { NoiseCorrelation::TimeConstant } else { NoiseCorrelation::Independent };
        let a = perturb(&exact, std, corr, seed).unwrap();
        let b = perturb(&exact, std, corr, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(perturb(&exact, 0.0, corr, seed).unwrap(), exact.clone());
        if constant {
            let d0: Vec<Vec2> = a.at(0).iter().zip(exact.at(0)).map(|(x, y)| *x - *y).collect();
            for k in 1..exact.num_times() {
                for (i, (x, y)) in a.at(k).iter().zip(exact.at(k)).enumerate() {
                    prop_assert!(((*x - *y) - d0[i]).norm() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn boundary_samples_follow_the_motion(p in breathing(), t in 0.0..200.0f64) {
        let domain = EllipseDomain::new(Ellipse::new(Vec2::ZERO, Vec2::new(0.8, 0.62), 0.0, 1.0));
        let xs = linspace(-1.0, 1.0, 21);
        let grid = classify_nodes(&xs, &xs, &domain, 0.5).unwrap();
        let m = AffineMotion::Breathing(p);
        let bd = sample_boundary(&m, &grid, &[t]).unwrap();
        for (x, u) in bd.positions.iter().zip(bd.at(0)) {
            prop_assert!(domain.level(*x).abs() <= 1e-9);
            prop_assert!(((*x + *u) - m.phi(t, *x)).norm() <= 1e-14);
        }
    }
}
