use proptest::prelude::*;

use simgcn_core::data::{best_proposal, generate_synthetic_dataset, DatasetSpec};
use simgcn_core::encoder::lstm_forward_cached;
use simgcn_core::encoder::LstmParams;
use simgcn_core::gradcheck::{finite_diff_grad, relative_error};
use simgcn_core::graph::{build_adjacency, gcn_forward, GcnParams, WeightedAdjacency};
use simgcn_core::heads::{global_avg_pool, score_head, Mlp, RegressionOffsets};
use simgcn_core::linalg::{Activation, Matrix};
use simgcn_core::loss::{encode_targets, l1_sparsity_loss, triplet_loss};
use simgcn_core::pipeline::refine;
use simgcn_core::proposals::{actionness_grouping, DEFAULT_THRESHOLDS};
use simgcn_core::rng::SeededRng;
use simgcn_core::segment::{tiou, Segment};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..10, 1usize..6)
}

fn phi() -> impl Strategy<Value = Matrix> {
    dims().prop_flat_map(|(n, d)| matrix(n, d))
}

fn phi_with_perm() -> impl Strategy<Value = (Matrix, Vec<usize>)> {
    phi().prop_flat_map(|m| {
        let n = m.rows();
        (Just(m), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

/// `P·A·Pᵀ` where row `i` of `P·X` is row `perm[i]` of `X`.
fn conjugate(a: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(perm[i], perm[j])])
}

fn segment() -> impl Strategy<Value = Segment> {
    (0.0f64..100.0, 0.5f64..50.0).prop_map(|(s, l)| Segment::new(s, s + l).unwrap())
}

proptest! {
    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(n, p), matrix(p, q)))
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let err = relative_error(left.as_slice(), right.as_slice());
        prop_assert!(err < 1e-9, "relative error {err:e}");
    }

    #[test]
    fn transpose_of_product(
        (a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(m, n, k)| (matrix(m, k), matrix(n, k)))
    ) {
        let lhs = a.matmul_t(&b).unwrap().transpose();
        let rhs = b.matmul_t(&a).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn quadratic_form_gradient(
        (q, x) in (1usize..6).prop_flat_map(|n| (matrix(n, n), prop::collection::vec(-2.0f64..2.0, n)))
    ) {
        let f = |v: &[f64]| {
            let mut s = 0.0;
            for i in 0..v.len() {
                for j in 0..v.len() {
                    s += v[i] * q[(i, j)] * v[j];
                }
            }
            s
        };
        let numeric = finite_diff_grad(f, &x, 1e-5).unwrap();
        let exact: Vec<f64> = (0..x.len())
            .map(|i| (0..x.len()).map(|j| (q[(i, j)] + q[(j, i)]) * x[j]).sum())
            .collect();
        if exact.iter().any(|g| g.abs() > 1e-3) {
            prop_assert!(relative_error(&numeric, &exact) < 1e-5);
        }
    }

    #[test]
    fn lstm_outputs_are_bounded(x in matrix(6, 3), seed in any::<u64>()) {
        let p = LstmParams::init(3, 5, &mut SeededRng::new(seed));
        let h = lstm_forward_cached(&x, &p).unwrap();
        prop_assert!(h.hidden().as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn adjacency_is_symmetric_bounded_with_unit_diagonal(phi in phi()) {
        let a = build_adjacency(&phi).unwrap();
        let m = a.matrix();
        for i in 0..m.rows() {
            let norm: f64 = phi.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert_eq!(m[(i, i)], if norm > 1e-12 { 1.0 } else { 0.0 });
            for j in 0..m.cols() {
                prop_assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&m[(i, j)]));
            }
        }
    }

    #[test]
    fn adjacency_is_permutation_equivariant((phi, perm) in phi_with_perm()) {
        let a = build_adjacency(&phi).unwrap();
        let b = build_adjacency(&phi.permute_rows(&perm).unwrap()).unwrap();
        prop_assert!(b.matrix().max_abs_diff(&conjugate(a.matrix(), &perm)).unwrap() <= 1e-12);
    }

    #[test]
    fn adjacency_ignores_row_scale(phi in phi(), row in any::<prop::sample::Index>(), c in 0.01f64..100.0) {
        let r = row.index(phi.rows());
        let mut scaled = phi.clone();
        scaled.row_mut(r).iter_mut().for_each(|v| *v *= c);
        let a = build_adjacency(&phi).unwrap();
        let b = build_adjacency(&scaled).unwrap();
        prop_assert!(a.matrix().max_abs_diff(b.matrix()).unwrap() <= 1e-12);
    }

    #[test]
    fn gcn_commutes_with_relabelling(
        (phi, perm) in phi_with_perm(),
        seed in any::<u64>(),
    ) {
        let n = phi.rows();
        let mut rng = SeededRng::new(seed);
        let h0 = Matrix::from_fn(n, 4, |_, _| rng.normal());
        let w = GcnParams::init(4, 3, &mut rng);
        let adj = build_adjacency(&phi).unwrap();
        let padj = WeightedAdjacency::from_matrix(conjugate(adj.matrix(), &perm)).unwrap();
        let lhs = gcn_forward(&padj, &h0.permute_rows(&perm).unwrap(), &w).unwrap();
        let rhs = gcn_forward(&adj, &h0, &w).unwrap().permute_rows(&perm).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);

        let head = Mlp::two_layer(3, 3, 1, Activation::Tanh, &mut rng);
        let s1 = score_head(&global_avg_pool(&lhs).unwrap(), &head).unwrap();
        let s2 = score_head(&global_avg_pool(&rhs).unwrap(), &head).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-12);
    }

    #[test]
    fn tiou_is_symmetric(a in segment(), b in segment()) {
        prop_assert_eq!(tiou(&a, &b), tiou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&tiou(&a, &b)));
    }

    #[test]
    fn shrinking_towards_the_intersection_never_hurts(
        a in segment(), b in segment(), t in 0.0f64..1.0, u in 0.0f64..1.0,
    ) {
        let (is, ie) = (a.start().max(b.start()), a.end().min(b.end()));
        prop_assume!(ie > is);
        let shrunk = Segment::new(b.start() + t * (is - b.start()), b.end() - u * (b.end() - ie)).unwrap();
        prop_assert!(tiou(&a, &shrunk) >= tiou(&a, &b) - 1e-15);
    }

    #[test]
    fn proposals_are_distinct_and_nonempty(act in prop::collection::vec(0.0f64..=1.0, 1..60)) {
        let props = actionness_grouping(&act, &DEFAULT_THRESHOLDS).unwrap();
        for (i, p) in props.iter().enumerate() {
            prop_assert!(p.len() >= 1.0);
            prop_assert!(p.end() <= act.len() as f64);
            prop_assert!(props[i + 1..].iter().all(|q| q != p));
        }
    }

    #[test]
    fn refine_inverts_encoding(p in segment(), gt in segment()) {
        let bound = 1e6;
        let r = refine(&p, encode_targets(&p, &gt).unwrap(), bound);
        prop_assert!((r.loc() - gt.loc()).abs() <= 1e-9);
        prop_assert!((r.len() - gt.len()).abs() <= 1e-9);
    }

    #[test]
    fn refined_segments_stay_in_the_video(p in segment(), tc in -5.0f64..5.0, tl in -5.0f64..5.0) {
        let video = 160.0;
        let r = refine(&p, RegressionOffsets::new(tc, tl), video);
        prop_assert!(r.start() >= 0.0 && r.end() <= video && r.end() > r.start());
    }

    #[test]
    fn satisfied_triplets_cost_only_the_regulariser(
        pairs in prop::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 1..20),
        theta in matrix(3, 2),
    ) {
        let margin = 0.5;
        let s_n: Vec<f64> = pairs.iter().map(|(n, _)| *n).collect();
        let s_p: Vec<f64> = pairs.iter().map(|(n, gap)| n + margin + gap).collect();
        prop_assume!(s_p.iter().zip(&s_n).all(|(p, n)| p - n >= margin));
        let l2 = 5e-3;
        prop_assert_eq!(triplet_loss(&s_p, &s_n, &[&theta], margin, l2).unwrap(), l2 * theta.sum_squares());
    }

    #[test]
    fn sparsity_is_a_mean_of_absolute_values(phi in phi()) {
        let a = build_adjacency(&phi).unwrap();
        let l = l1_sparsity_loss(&a);
        let m = a.matrix();
        let mut sum = 0.0;
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                sum += m[(i, j)].abs();
            }
        }
        prop_assert!((l - sum / (m.rows() * m.cols()) as f64).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&l));
        let abs = WeightedAdjacency::from_matrix(m.map(f64::abs)).unwrap();
        prop_assert_eq!(l1_sparsity_loss(&abs), l);
    }
}

/// Every synthetic video yields some proposal with tIoU ≥ 0.5 against its
/// ground truth.
#[test]
fn generator_guarantees_a_good_proposal() {
    for seed in 0..1000 {
        let spec = DatasetSpec {
            num_classes: 3,
            videos_per_class: 2,
            test_classes: 1,
            seed,
            ..DatasetSpec::default()
        };
        let data = generate_synthetic_dataset(&spec).unwrap();
        for (i, v) in data.videos.iter().enumerate() {
            let props = v.proposals(&DEFAULT_THRESHOLDS).unwrap();
            let best = best_proposal(&props, &v.gt).expect("at least one proposal");
            let iou = tiou(&props[best], &v.gt);
            assert!(iou >= 0.5, "seed {seed}, video {i}: best tIoU {iou}");
        }
    }
}

#[test]
fn zero_rows_get_zero_similarity() {
    let mut phi = Matrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64 + 1.0);
    phi.row_mut(2).iter_mut().for_each(|v| *v = 0.0);
    let a = build_adjacency(&phi).unwrap();
    for k in 0..5 {
        assert_eq!(a.matrix()[(2, k)], 0.0);
        assert_eq!(a.matrix()[(k, 2)], 0.0);
    }
}
