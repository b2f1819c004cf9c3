//! Property tests for the library invariants.

use proptest::prelude::*;

use momentsos::certify::{certify, check_rank_bound, numerical_rank, rank_report, CertificateKind, CertifySettings};
use momentsos::extract::{
    dehomogenize, extract_atoms, qcqp_recover, verify_support, witness_polynomial, AtomicMeasure, ExtractOptions,
    Provenance,
};
use momentsos::moments::{basis_matrices, homogenize_sequence, moments_of_atoms, MomentSequence};
use momentsos::oracle::{grid_min, oracle, OracleSettings};
use momentsos::poly::{basis_size, binomial, homogenize_poly, monomial_basis, Polynomial, Pop};
use momentsos::relaxation::{build_qn, build_unconstrained_dual};
use momentsos::sdp::{solve, SolveStatus, SolverSettings};

fn poly_strategy(d: usize, deg: usize) -> impl Strategy<Value = Polynomial> {
    let n = basis_size(d, deg);
    prop::collection::vec(prop_oneof![Just(0.0), -5.0..5.0f64], n).prop_map(move |coefs| {
        Polynomial::from_terms(
            d,
            monomial_basis(d, deg).into_iter().zip(coefs).map(|(e, c)| (e.entries().to_vec(), c)),
        )
        .unwrap()
    })
}

fn point_strategy(d: usize, r: usize, radius: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-radius..radius, d), r)
}

fn weights_strategy(r: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1..1.0f64, r).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

/// Sequence of the given order from `r` atoms in `d` variables, plus the atoms.
fn atomic_sequence(d: usize, r: usize, order: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, MomentSequence)> {
    (point_strategy(d, r, 1.5), weights_strategy(r)).prop_map(move |(p, w)| {
        let phi = moments_of_atoms(&p, &w, order).unwrap();
        (p, w, phi)
    })
}

fn min_sep(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dist = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            best = best.min(dist);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogenize_then_unit_x0_is_identity(f in (1usize..4).prop_flat_map(|d| poly_strategy(d, 4))) {
        let h = homogenize_poly(&f, 2).unwrap();
        prop_assert!(h.terms().all(|(e, _)| e.total_degree() == 4));
        prop_assert_eq!(h.dehomogenize_first().unwrap(), f);
    }

    #[test]
    fn basis_size_and_prefix(d in 1usize..5, k in 1usize..6) {
        let b = monomial_basis(d, k);
        let prev = monomial_basis(d, k - 1);
        prop_assert_eq!(b.len(), binomial(k + d, d));
        prop_assert_eq!(&b[..prev.len()], &prev[..]);
    }

    #[test]
    fn eval_is_linear(
        (p, q, x) in (1usize..4).prop_flat_map(|d| (poly_strategy(d, 3), poly_strategy(d, 3), prop::collection::vec(-2.0..2.0f64, d))),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let lhs = p.scale(a).add(&q.scale(b)).eval(&x).unwrap();
        let rhs = a * p.eval(&x).unwrap() + b * q.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn riesz_is_linear(
        (p, q, (_, _, phi)) in (1usize..4).prop_flat_map(|d| (poly_strategy(d, 4), poly_strategy(d, 4), atomic_sequence(d, 3, 2))),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let lhs = phi.riesz(&p.scale(a).add(&q.scale(b))).unwrap();
        let rhs = a * phi.riesz(&p).unwrap() + b * phi.riesz(&q).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs() + rhs.abs()));
    }

    #[test]
    fn atomic_moment_matrices_are_psd_with_bounded_rank(
        (r, (_, _, phi)) in (1usize..4, 1usize..6).prop_flat_map(|(d, r)| (Just(r), atomic_sequence(d, r, 3))),
    ) {
        for k in 0..=3 {
            let m = phi.moment_matrix(k).unwrap();
            let scale = m.as_matrix().amax().max(1.0);
            prop_assert!(m.min_eigenvalue() >= -1e-10 * scale, "k = {}: {}", k, m.min_eigenvalue());
            prop_assert!(numerical_rank(&m, 1e-9).rank <= r);
        }
    }

    #[test]
    fn localizing_matrices_of_inner_atoms_are_psd(
        (d, r) in (1usize..4, 1usize..5),
        raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 5),
        w in weights_strategy(5),
    ) {
        // atoms strictly inside the unit ball, g = 1 - |x|^2
        let pts: Vec<Vec<f64>> = raw[..r].iter().map(|p| {
            let v = &p[..d];
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| if nrm > 0.95 { x * 0.95 / nrm } else { *x }).collect()
        }).collect();
        let ws: Vec<f64> = w[..r].to_vec();
        let n = 3;
        let phi = moments_of_atoms(&pts, &ws, n).unwrap();
        let mut g = Polynomial::constant(d, 1.0);
        for i in 0..d {
            g = g.sub(&Polynomial::var(d, i).pow(2));
        }
        for k in 0..n {
            let l = phi.localizing_matrix(&g, k).unwrap();
            prop_assert!(l.min_eigenvalue() >= -1e-10, "k = {}: {}", k, l.min_eigenvalue());
        }
    }

    #[test]
    fn moment_matrix_matches_basis_matrices((d, k) in (1usize..4, 0usize..4), seed in any::<u64>()) {
        let len = basis_size(d, 2 * k);
        let values: Vec<f64> = (0..len).map(|i| ((seed.wrapping_add(i as u64 * 7919) % 1000) as f64) / 100.0 - 5.0).collect();
        let phi = MomentSequence::new(d, k, values).unwrap();
        let direct = phi.moment_matrix(k).unwrap();
        let s = basis_size(d, k);
        let mut sum = nalgebra::DMatrix::<f64>::zeros(s, s);
        for (alpha, b) in basis_matrices(d, k, &Polynomial::constant(d, 1.0)).unwrap() {
            sum += b.as_matrix() * phi.get(&alpha).unwrap();
        }
        prop_assert_eq!(direct.as_matrix(), &sum);
    }

    #[test]
    fn homogenized_sequence_round_trip((d, n) in (1usize..4, 1usize..4), seed in any::<u64>()) {
        let len = basis_size(d, 2 * n);
        let values: Vec<f64> = (0..len).map(|i| (seed.rotate_left(i as u32 % 64) % 10_007) as f64 * 1e-3 - 5.0).collect();
        let phi = MomentSequence::new(d, n, values).unwrap();
        let hom = homogenize_sequence(&phi).unwrap();
        prop_assert!(hom.dehomogenize() == phi);
        prop_assert!(hom.moment_matrix() == phi.moment_matrix(n).unwrap());
    }

    #[test]
    fn psd_localizing_gives_nonnegative_riesz(
        (q, (pts, w, _)) in (1usize..3).prop_flat_map(|d| (poly_strategy(d, 1), atomic_sequence(d, 3, 2))),
    ) {
        let d = q.num_vars();
        let pts: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * 0.5).collect()).collect();
        let phi = moments_of_atoms(&pts, &w, 2).unwrap();
        let mut g = Polynomial::constant(d, 1.0);
        for i in 0..d {
            g = g.sub(&Polynomial::var(d, i).pow(2));
        }
        prop_assume!(phi.localizing_matrix(&g, 1).unwrap().min_eigenvalue() >= 0.0);
        let val = phi.riesz(&q.mul(&q).mul(&g)).unwrap();
        let scale = q.coefficient_norm().powi(2) * (1.0 + phi.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        prop_assert!(val >= -1e-8 * scale, "{}", val);
    }

    #[test]
    fn pushforward_is_feasible_and_blocks_sized(
        (pts, w) in (point_strategy(2, 3, 0.7), weights_strategy(3)),
        n in 1usize..4,
    ) {
        let d = 2;
        let vars = vec!["x".to_string(), "y".to_string()];
        let f = momentsos::parse::parse_polynomial("x^2 - y + x*y", &vars).unwrap();
        let g = momentsos::parse::parse_polynomial("1 - x^2 - y^2", &vars).unwrap();
        let pop = Pop::new(f, vec![g]).unwrap();
        let prog = build_qn(&pop, n).unwrap();
        prop_assert_eq!(prog.blocks[0].dim, basis_size(d, n));
        prop_assert_eq!(prog.blocks[1].dim, basis_size(d, n - 1));
        let phi = moments_of_atoms(&pts, &w, n).unwrap();
        let y = phi.values();
        prop_assert!(prog.equality_residual(y) <= 1e-10);
        for b in prog.block_values(y) {
            prop_assert!(b.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn rank_is_monotone_in_order(
        (n, (_, _, phi)) in (1usize..4, 1usize..8, 1usize..4).prop_flat_map(|(d, r, n)| (Just(n), atomic_sequence(d, r, n))),
    ) {
        let rep = rank_report(&phi, n, 1e-6).unwrap();
        for k in 1..=n {
            prop_assert!(rep.rank(k) >= rep.rank(k - 1));
        }
    }

    #[test]
    fn rank_bound_sound_on_exact_instances(
        (n, v, r, (pts, _, phi)) in (1usize..4, 2usize..4, 1usize..3)
            .prop_filter("n >= v", |(_, n, v)| n >= v)
            .prop_flat_map(|(d, n, v)| {
                let r_max = (n - v + 1).min(basis_size(d, n) - 1).max(1);
                (Just(d), Just(n), Just(v), 1..=r_max)
            })
            .prop_flat_map(|(d, n, v, r)| (Just(n), Just(v), Just(r), atomic_sequence(d, r, n))),
    ) {
        prop_assume!(min_sep(&pts) > 0.05);
        let (ok, rep) = check_rank_bound(&phi, n, v, 1e-6).unwrap();
        prop_assert_eq!(rep.top(), r);
        prop_assert!(ok);
    }

    #[test]
    fn extraction_round_trip(
        (r, (pts, w, phi)) in (1usize..4, 2usize..4)
            .prop_flat_map(|(d, n)| (Just(d), Just(n), 1..=n.min(basis_size(d, n) - 1).min(4)))
            .prop_flat_map(|(d, n, r)| (Just(r), atomic_sequence(d, r, n))),
    ) {
        prop_assume!(min_sep(&pts) > 0.05);
        let mu = extract_atoms(&phi, r, 1e-6).unwrap();
        prop_assert_eq!(mu.num_atoms(), r);
        // nearest-neighbour assignment
        for (p, wt) in pts.iter().zip(&w) {
            let j = (0..r)
                .min_by(|&a, &b| dist(&mu.points[a], p).total_cmp(&dist(&mu.points[b], p)))
                .unwrap();
            prop_assert!(dist(&mu.points[j], p) <= 1e-6, "{:?} vs {:?}", mu.points[j], p);
            prop_assert!((mu.weights[j] - wt).abs() <= 1e-6);
        }
        prop_assert!(mu.weights.iter().all(|&x| x > 1e-8));
    }

    #[test]
    fn dehomogenize_weight_formula(
        pts in point_strategy(3, 4, 2.0),
        w in weights_strategy(4),
        n in 1usize..4,
    ) {
        let kept: Vec<usize> = (0..4).filter(|&i| pts[i][0].abs() > 1e-3).collect();
        prop_assume!(!kept.is_empty());
        let mu = AtomicMeasure::new(pts.clone(), w.clone(), Provenance::Given).unwrap();
        let (out, rep) = dehomogenize(&mu, n, Some(1e-3)).unwrap();
        let expected: f64 = kept.iter().map(|&i| w[i] * pts[i][0].powi(2 * n as i32)).sum();
        let got: f64 = out.weights.iter().sum();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(rep.discarded_atoms, 4 - kept.len());
    }

    #[test]
    fn witness_vanishes_exactly_on_its_points(pts in point_strategy(2, 3, 2.0), probe in prop::collection::vec(-3.0..3.0f64, 2)) {
        let p = witness_polynomial(&pts).unwrap();
        for x in &pts {
            prop_assert!(p.eval(x).unwrap().abs() <= 1e-12);
        }
        let far = pts.iter().all(|x| dist(x, &probe) >= 1e-3);
        if far {
            prop_assert!(p.eval(&probe).unwrap() > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weak_duality_on_random_sos_plus_constant(
        (pts, w) in (point_strategy(2, 3, 2.0), weights_strategy(3)),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        c in -3.0..3.0f64,
    ) {
        // f = (x^2 - a y)^2 + (y - b)^2 + c is a sum of squares plus a constant
        let vars = vec!["x".to_string(), "y".to_string()];
        let f = momentsos::parse::parse_polynomial(&format!("(x^2 - ({a})*y)^2 + (y - ({b}))^2 + ({c})"), &vars).unwrap();
        let dual = solve(&build_unconstrained_dual(&f).unwrap(), &SolverSettings::default()).unwrap();
        prop_assume!(dual.status == SolveStatus::Optimal);
        let lambda = dual.value;
        let phi = moments_of_atoms(&pts, &w, 2).unwrap();
        let scale = 1.0 + f.coefficient_norm() * phi.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(phi.riesz(&f).unwrap() >= lambda - 1e-8 * scale);
        // every Dirac measure is primal feasible too
        for x in pts.iter().chain([vec![0.0, b]].iter()) {
            prop_assert!(lambda <= f.eval(x).unwrap() + 1e-8 * (1.0 + f.eval(x).unwrap().abs()));
        }
    }

    #[test]
    fn certificates_respect_their_contract(coefs in prop::collection::vec(-2.0..2.0f64, 6), n in 1usize..3) {
        // random quadratic on the unit disk
        let d = 2;
        let f = Polynomial::from_terms(d, monomial_basis(d, 2).into_iter().zip(coefs).map(|(e, c)| (e.entries().to_vec(), c))).unwrap();
        let mut g = Polynomial::constant(d, 1.0);
        for i in 0..d {
            g = g.sub(&Polynomial::var(d, i).pow(2));
        }
        let pop = Pop::new(f.clone(), vec![g]).unwrap();
        let res = solve(&build_qn(&pop, n).unwrap(), &SolverSettings::default()).unwrap();
        prop_assume!(res.status == SolveStatus::Optimal);
        let phi = res.moments().unwrap();
        prop_assert!((phi.mass() - 1.0).abs() <= 1e-8);
        let cert = certify(&pop, n, &res, &CertifySettings::default()).unwrap();
        if cert.kind == CertificateKind::ExactByRank {
            prop_assert!(cert.moment_rank.unwrap() <= n);
        }
        if let (true, Some(mu)) = (cert.kind.is_exact(), cert.measure.as_ref()) {
            let scale = 1.0 + res.value.abs();
            let atom_value: f64 = mu.points.iter().zip(&mu.weights).map(|(x, w)| w * f.eval(x).unwrap()).sum();
            prop_assert!(phi.riesz(&f).unwrap() - atom_value <= 1e-5 * scale);
            let sup = verify_support(mu, &pop, 1e-5).unwrap();
            prop_assert!(sup.passed);
            for x in &mu.points {
                prop_assert!((f.eval(x).unwrap() - res.value).abs() <= 1e-5 * scale);
            }
            prop_assert!(mu.weights.iter().all(|&w| w > 1e-8));
        }
        // oracle lower-bound sanity
        let o = grid_min(&pop, &[(-1.0, 1.0), (-1.0, 1.0)], 201).unwrap();
        prop_assert!(o.value >= res.value - 2e-9 * (1.0 + res.value.abs()));
    }

    #[test]
    fn qcqp_recover_returns_global_minimizers(theta in 0.0..std::f64::consts::TAU, n in 1usize..3) {
        // linear objective on the disk: the minimizer is the boundary point opposite c
        let (c1, c2) = (theta.cos(), theta.sin());
        let d = 2;
        let f = Polynomial::from_terms(d, vec![(vec![1, 0], c1), (vec![0, 1], c2)]).unwrap();
        let g = Polynomial::from_terms(d, vec![(vec![0, 0], 1.0), (vec![2, 0], -1.0), (vec![0, 2], -1.0)]).unwrap();
        let pop = Pop::new(f.clone(), vec![g]).unwrap();
        let res = solve(&build_qn(&pop, n).unwrap(), &SolverSettings::default()).unwrap();
        prop_assert_eq!(res.status, SolveStatus::Optimal);
        let rec = qcqp_recover(res.moments().unwrap(), &pop, n, &ExtractOptions::default()).unwrap();
        for x in &rec.measure.points {
            prop_assert!((f.eval(x).unwrap() - res.value).abs() <= 1e-5 * (1.0 + res.value.abs()));
        }
        prop_assert!(verify_support(&rec.measure, &pop, 1e-6).unwrap().passed);
        prop_assert!((res.value + 1.0).abs() <= 1e-6);
    }

    #[test]
    fn solver_is_deterministic(a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let d = 2;
        let f = Polynomial::from_terms(d, vec![(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![1, 0], a), (vec![0, 1], b)]).unwrap();
        let g = Polynomial::from_terms(d, vec![(vec![1, 0], 1.0), (vec![0, 1], 1.0), (vec![0, 0], -1.0)]).unwrap();
        let pop = Pop::new(f, vec![g]).unwrap();
        let prog = build_qn(&pop, 2).unwrap();
        let r1 = solve(&prog, &SolverSettings::default()).unwrap();
        let r2 = solve(&prog, &SolverSettings::default()).unwrap();
        prop_assert_eq!(r1.status, r2.status);
        prop_assert!((r1.value - r2.value).abs() <= 1e-10);
    }

    #[test]
    fn oracle_is_deterministic_and_below_nothing(seed in any::<u64>()) {
        let vars = vec!["x".to_string(), "y".to_string()];
        let f = momentsos::parse::parse_polynomial("(x^2 - 1)^2 + (y - x)^2", &vars).unwrap();
        let pop = Pop::unconstrained(f).unwrap();
        let s = OracleSettings { bounds: Some(vec![(-2.0, 2.0); 2]), seed, starts: 8, ..OracleSettings::default() };
        let a = oracle(&pop, &s).unwrap();
        prop_assert_eq!(&a, &oracle(&pop, &s).unwrap());
        for (x, v) in a.points.iter().zip(&a.point_values) {
            prop_assert!((v - a.value).abs() <= 1e-8);
            prop_assert!((pop.objective().eval(x).unwrap() - *v).abs() <= 1e-12);
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
