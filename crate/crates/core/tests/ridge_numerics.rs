use dovi::ridge::{info_gain, linalg, Provenance, RidgeState, REFACTOR_EVERY};
use dovi::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

type State = RidgeState<usize>;

fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Random vector with norm uniform in `[0, 1]`.
fn random_feature(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r: f64 = rng.gen();
    x.into_iter().map(|v| v / n * r).collect()
}

fn dense(st: &State) -> DMatrix<f64> {
    DMatrix::from_row_slice(st.dim(), st.dim(), st.gram())
}

fn dense_logdet(m: &DMatrix<f64>) -> f64 {
    m.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum()
}

#[test]
fn scalar_examples() {
    let mut st = State::new(1, 1.0).unwrap();
    assert_eq!(st.bonus(&[1.0], 1.0), 2f64.ln().sqrt());
    assert!((st.bonus(&[1.0], 1.0) - 0.832554611).abs() < 1e-9);
    assert_eq!(st.solve(&[]).unwrap(), vec![0.0]);
    st.add(&[1.0], 0, Provenance::Online).unwrap();
    assert_eq!(st.gram(), &[2.0]);
    assert!((st.logdet() - 2f64.ln()).abs() < 1e-15);
    let w = st.solve(&[1.0]).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-15);
    assert_eq!(st.bonus(&[0.0], 3.0), 0.0);
}

#[test]
fn zero_feature_leaves_gram_alone_but_is_pooled() {
    let mut st = State::new(3, 1.0).unwrap();
    st.add(&[0.0; 3], 7, Provenance::Offline).unwrap();
    assert_eq!(st.gram(), State::new(3, 1.0).unwrap().gram());
    assert_eq!(st.logdet(), 0.0);
    assert_eq!(st.offline_pool().len(), 1);
}

#[test]
fn add_and_solve_check_dimensions_and_norms() {
    let mut st = State::new(2, 1.0).unwrap();
    assert!(matches!(
        st.add(&[1.0], 0, Provenance::Online),
        Err(Error::DimensionMismatch { expected: 2, got: 1 })
    ));
    assert!(st.add(&[1.0, 1.0], 0, Provenance::Online).is_err());
    st.add(&[0.6, 0.8], 0, Provenance::Online).unwrap();
    assert!(matches!(st.solve(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    assert!(State::new(2, 0.0).is_err());
    assert!(State::new(2, -1.0).is_err());
}

#[test]
fn determinant_lemma_on_random_cases() {
    let mut r = rng(1);
    for case in 0..1000 {
        let d = 1 + case % 12;
        let lambda = r.gen_range(0.1..3.0);
        let mut st = State::new(d, lambda).unwrap();
        for j in 0..r.gen_range(0..20) {
            st.add(&random_feature(&mut r, d), j, Provenance::Online).unwrap();
        }
        let x = random_feature(&mut r, d);
        let before = dense(&st);
        let xv = DVector::from_vec(x.clone());
        let after = &before + &xv * xv.transpose();
        let lhs = dense_logdet(&after) - dense_logdet(&before);
        let quad = (xv.transpose() * before.clone().try_inverse().unwrap() * &xv)[(0, 0)];
        assert!((lhs - quad.ln_1p()).abs() <= 1e-8, "case {case}");
        assert!((st.bonus(&x, 1.0).powi(2) - lhs).abs() <= 1e-8);
        let start = st.snapshot();
        st.add(&x, usize::MAX, Provenance::Online).unwrap();
        let gain = info_gain(&start, &st.snapshot()).unwrap();
        assert!((gain - lhs).abs() <= 1e-8);
        if x.iter().any(|&v| v != 0.0) {
            assert!(gain > 0.0);
        }
    }
}

#[test]
fn incremental_factor_tracks_refactorization() {
    let d = 6;
    let mut st = State::new(d, 1.0).unwrap();
    let mut r = rng(2);
    for j in 0..50 {
        st.add(&random_feature(&mut r, d), j, Provenance::Online).unwrap();
    }
    assert!((st.logdet() - st.recomputed_logdet().unwrap()).abs() <= 1e-8);

    // 10^4 mixed updates spanning many refactor periods; compare against an
    // independent accumulation of the Gram matrix.
    let mut oracle = DMatrix::<f64>::identity(d, d);
    let mut st = State::new(d, 1.0).unwrap();
    for j in 0..10_000 {
        let x = if j % 3 == 0 {
            let mut e = vec![0.0; d];
            e[j % d] = 1.0;
            e
        } else {
            random_feature(&mut r, d)
        };
        let prov = if j % 2 == 0 { Provenance::Offline } else { Provenance::Online };
        st.add(&x, j, prov).unwrap();
        let xv = DVector::from_vec(x);
        oracle += &xv * xv.transpose();
        if j == REFACTOR_EVERY - 2 {
            let l = DMatrix::from_row_slice(d, d, st.cholesky_factor());
            let rebuilt = &l * l.transpose();
            assert!((rebuilt - &oracle).abs().max() <= 1e-8 * oracle.abs().max());
        }
    }
    let gram = dense(&st);
    assert!((&gram - &oracle).abs().max() <= 1e-8 * oracle.abs().max());
    assert!((&gram - gram.transpose()).abs().max() <= 1e-12);
    assert!((st.logdet() - dense_logdet(&oracle)).abs() <= 1e-8);
    let l = DMatrix::from_row_slice(d, d, st.cholesky_factor());
    let fresh = DMatrix::from_row_slice(d, d, &linalg::cholesky(st.gram(), d).unwrap());
    assert!((l - fresh).abs().max() <= 1e-8 * oracle.abs().max().sqrt());
    assert_eq!(st.offline_pool().len() + st.online_pool().len(), 10_000);
    let min_diag = (0..d).map(|i| st.cholesky_factor()[i * d + i]).fold(f64::INFINITY, f64::min);
    assert!(min_diag * min_diag >= 1.0 - 1e-9);
}

#[test]
fn solve_matches_dense_inverse() {
    let mut r = rng(3);
    for d in 1..=16 {
        let mut st = State::new(d, 1.0).unwrap();
        let mut oracle_gram = DMatrix::<f64>::identity(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        let mut targets = Vec::new();
        for j in 0..(3 * d) {
            let x = random_feature(&mut r, d);
            let t: f64 = r.gen_range(-2.0..2.0);
            st.add(&x, j, if j % 2 == 0 { Provenance::Offline } else { Provenance::Online }).unwrap();
            let xv = DVector::from_vec(x);
            oracle_gram += &xv * xv.transpose();
            rhs += &xv * t;
            targets.push((j, t));
        }
        // Targets follow the offline groups, then the online groups.
        let ordered: Vec<f64> = st
            .groups()
            .map(|g| targets.iter().find(|(j, _)| *j == g.key).unwrap().1)
            .collect();
        let w = DVector::from_vec(st.solve(&ordered).unwrap());
        let expected = oracle_gram.clone().try_inverse().unwrap() * &rhs;
        let rel = (&w - &expected).norm() / expected.norm().max(1e-300);
        assert!(rel <= 1e-8, "d={d} rel={rel}");
        let residual = (&oracle_gram * &w - &rhs).abs().max();
        assert!(residual <= 1e-9 * (1.0 + rhs.abs().max()));
    }
}

#[test]
fn pooled_duplicates_equal_repeated_rows() {
    let mut st = State::new(2, 1.0).unwrap();
    let x = [0.6, 0.8];
    for _ in 0..5 {
        st.add(&x, 1, Provenance::Offline).unwrap();
    }
    st.add(&[1.0, 0.0], 2, Provenance::Online).unwrap();
    assert_eq!(st.group_count(), 2);
    assert_eq!(st.offline_pool().groups()[0].count, 5);
    let w = st.solve_with(|&k| if k == 1 { 0.5 } else { 1.0 });
    let gram = DMatrix::from_row_slice(2, 2, &[1.0 + 5.0 * 0.36 + 1.0, 5.0 * 0.48, 5.0 * 0.48, 1.0 + 5.0 * 0.64]);
    let b = DVector::from_vec(vec![5.0 * 0.5 * 0.6 + 1.0, 5.0 * 0.5 * 0.8]);
    let expected = gram.try_inverse().unwrap() * b;
    assert!((w[0] - expected[0]).abs() < 1e-12 && (w[1] - expected[1]).abs() < 1e-12);
}

#[test]
fn bonus_shrinks_as_samples_arrive() {
    let mut r = rng(4);
    for _ in 0..200 {
        let d = r.gen_range(1..8);
        let mut st = State::new(d, 1.0).unwrap();
        let x = random_feature(&mut r, d);
        if x.iter().all(|&v| v == 0.0) {
            continue;
        }
        let mut prev = st.bonus(&x, 1.5);
        for j in 0..10 {
            st.add(&random_feature(&mut r, d), j, Provenance::Online).unwrap();
            let b = st.bonus(&x, 1.5);
            assert!(b <= prev + 1e-12);
            prev = b;
        }
        st.add(&x, 99, Provenance::Online).unwrap();
        assert!(st.bonus(&x, 1.5) < prev);
    }
}

#[test]
fn info_gain_edge_cases() {
    let st = State::new(4, 1.0).unwrap();
    assert_eq!(info_gain(&st.snapshot(), &st.snapshot()).unwrap(), 0.0);
    let other = State::new(3, 1.0).unwrap();
    assert!(info_gain(&st.snapshot(), &other.snapshot()).is_err());
    let dump = st.snapshot().render_dump();
    assert!(dump.starts_with("# gram matrix\ndim = 4\nlogdet = 0.0\nrow 0 : 1.0 0.0 0.0 0.0\n"));
}

#[test]
fn canonical_stream_information_gain() {
    let (d, k) = (4usize, 400usize);
    let mut st = State::new(d, 1.0).unwrap();
    let start = st.snapshot();
    let mut r = rng(5);
    let mut counts = vec![0u32; d];
    for j in 0..k {
        let i = r.gen_range(0..d);
        counts[i] += 1;
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        st.add(&e, j, Provenance::Online).unwrap();
    }
    let gain = info_gain(&start, &st.snapshot()).unwrap();
    let exact: f64 = counts.iter().map(|&c| (1.0 + c as f64).ln()).sum();
    assert!((gain - exact).abs() <= 1e-9);
    let approx = d as f64 * (1.0 + k as f64 / d as f64).ln();
    assert!((gain / approx - 1.0).abs() <= 0.05, "{gain} vs {approx}");
}
