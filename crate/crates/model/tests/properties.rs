use citf_model::decoder::Decoder;
use citf_model::encoders::{BehaviorEncoder, PriorityEncoder, SafetyEncoder};
use citf_model::eval::rmse_metric;
use citf_model::features::{BEHAVIOR_CHANNELS, POOLING_CHANNELS, SAFETY_CHANNELS};
use citf_model::grid::Grid;
use citf_model::leanformer::{full_attention, linear_attention_context, linear_attention_head, Leanformer};
use citf_nn::layers::gcn_normalize;
use citf_nn::optim::CosineRestarts;
use citf_nn::{ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 8;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.set(i, i, 1.0);
    }
    t
}

/// Random symmetric proximity graph per frame, normalized like the model's.
fn adjacency(rng: &mut ChaCha8Rng, agents: usize, frames: usize) -> Vec<Tensor> {
    (0..frames)
        .map(|_| {
            let mut a = Tensor::zeros(&[agents, agents]);
            for i in 0..agents {
                for j in i + 1..agents {
                    if rng.gen_bool(0.6) {
                        let w = rng.gen_range(0.1..1.0);
                        a.set(i, j, w);
                        a.set(j, i, w);
                    }
                }
            }
            gcn_normalize(&a, 1.0).unwrap()
        })
        .collect()
}

/// Grid whose target (agent 0) is always present and whose other slots are
/// present with probability one half.
fn random_grid(rng: &mut ChaCha8Rng, agents: usize, frames: usize) -> Grid {
    let mask = (0..agents * frames).map(|r| r < frames || rng.gen_bool(0.5)).collect();
    Grid::new(agents, frames, mask).unwrap()
}

/// Zeroes absent rows, as feature standardization does.
fn masked(grid: &Grid, mut x: Tensor) -> Tensor {
    let cols = x.shape()[1];
    for r in 0..grid.rows() {
        if !grid.mask[r] {
            for c in 0..cols {
                x.set(r, c, 0.0);
            }
        }
    }
    x
}

fn permute_rows(x: &Tensor, grid: &Grid, perm: &[usize]) -> Tensor {
    let cols = x.shape()[1];
    let mut out = Tensor::zeros(x.shape());
    for (new, &old) in perm.iter().enumerate() {
        for k in 0..grid.frames {
            for c in 0..cols {
                out.set(grid.row(new, k), c, x.get(grid.row(old, k), c));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_context_rows_are_distributions(seed in any::<u64>(), n in 4usize..24, rank in 1usize..4, scale in 0.1..20.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tape::detached();
        let q = t.constant(random(&mut rng, n, 4, scale));
        let k = t.constant(random(&mut rng, n, 4, scale));
        let u = t.constant(random(&mut rng, n, rank, 1.0));
        let p = linear_attention_context(&mut t, q, k, u).unwrap();
        prop_assert_eq!(t.shape(p), &[n, rank][..]);
        for r in 0..n {
            let row = t.value(p).row(r);
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn identity_projections_reduce_to_full_attention(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tape::detached();
        let q = t.constant(random(&mut rng, n, 4, 2.0));
        let k = t.constant(random(&mut rng, n, 4, 2.0));
        let v = t.constant(random(&mut rng, n, D, 2.0));
        let eye = t.constant(identity(n));
        let lean = linear_attention_head(&mut t, q, k, v, eye, eye).unwrap();
        let full = full_attention(&mut t, q, k, v).unwrap();
        prop_assert!(t.value(lean).max_abs_diff(t.value(full)) <= 1e-6);
    }

    #[test]
    fn safety_encoder_is_permutation_equivariant(seed in any::<u64>(), agents in 2usize..5) {
        let frames = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = SafetyEncoder::new(&mut store, D, 2, 3, &mut rng).unwrap();
        let grid = random_grid(&mut rng, agents, frames);
        let h = masked(&grid, random(&mut rng, grid.rows(), SAFETY_CHANNELS, 2.0));
        let adj = adjacency(&mut rng, agents, frames);

        let mut perm: Vec<usize> = (0..agents).collect();
        for i in (1..agents).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut pmask = vec![false; grid.rows()];
        for (new, &old) in perm.iter().enumerate() {
            for k in 0..frames {
                pmask[grid.row(new, k)] = grid.mask[grid.row(old, k)];
            }
        }
        let pgrid = Grid::new(agents, frames, pmask).unwrap();
        let padj: Vec<Tensor> = adj
            .iter()
            .map(|a| {
                let mut p = Tensor::zeros(&[agents, agents]);
                for i in 0..agents {
                    for j in 0..agents {
                        p.set(i, j, a.get(perm[i], perm[j]));
                    }
                }
                p
            })
            .collect();

        let mut t = Tape::new(&store);
        let x = t.constant(h.clone());
        let y = enc.forward(&mut t, x, &adj, &grid).unwrap();
        let px = t.constant(permute_rows(&h, &grid, &perm));
        let py = enc.forward(&mut t, px, &padj, &pgrid).unwrap();
        let expect = permute_rows(t.value(y), &grid, &perm);
        prop_assert!(t.value(py).max_abs_diff(&expect) <= 1e-10);
    }

    #[test]
    fn recurrent_states_ignore_later_frames(seed in any::<u64>(), cut in 0usize..5) {
        let (agents, frames) = (3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let behavior = BehaviorEncoder::new(&mut store, D, 2, &mut rng).unwrap();
        let priority = PriorityEncoder::new(&mut store, D, 2, &mut rng).unwrap();
        let grid = Grid::full(agents, frames);
        let j = random(&mut rng, grid.rows(), BEHAVIOR_CHANNELS, 1.0);
        let s = random(&mut rng, grid.rows(), D, 1.0);
        let p = random(&mut rng, grid.rows(), POOLING_CHANNELS, 1.0);
        let later = |x: &Tensor, rng: &mut ChaCha8Rng| {
            let mut y = x.clone();
            for a in 0..agents {
                for k in cut + 1..frames {
                    for c in 0..x.shape()[1] {
                        y.set(grid.row(a, k), c, rng.gen_range(-5.0..5.0));
                    }
                }
            }
            y
        };
        let (j2, s2, p2) = (later(&j, &mut rng), later(&s, &mut rng), later(&p, &mut rng));

        let mut t = Tape::new(&store);
        let run_b = |t: &mut Tape, j: &Tensor, s: &Tensor| {
            let (j, s) = (t.constant(j.clone()), t.constant(s.clone()));
            behavior.recurrent_states(t, j, s, &grid).unwrap()
        };
        let b1 = run_b(&mut t, &j, &s);
        let b2 = run_b(&mut t, &j2, &s2);
        let (p1, p2) = {
            let (a, b) = (t.constant(p), t.constant(p2));
            (priority.recurrent_states(&mut t, a, &grid).unwrap(), priority.recurrent_states(&mut t, b, &grid).unwrap())
        };
        for a in 0..agents {
            for k in 0..frames {
                let r = grid.row(a, k);
                let same_b = t.value(b1).row(r) == t.value(b2).row(r);
                let same_p = t.value(p1).row(r) == t.value(p2).row(r);
                prop_assert_eq!(same_b, k <= cut, "behavior agent {} frame {}", a, k);
                prop_assert_eq!(same_p, k <= cut, "priority agent {} frame {}", a, k);
            }
        }
    }

    #[test]
    fn absent_slots_are_exactly_zero(seed in any::<u64>(), agents in 2usize..5) {
        let frames = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let safety = SafetyEncoder::new(&mut store, D, 2, 3, &mut rng).unwrap();
        let behavior = BehaviorEncoder::new(&mut store, D, 2, &mut rng).unwrap();
        let priority = PriorityEncoder::new(&mut store, D, 2, &mut rng).unwrap();
        let lean = Leanformer::new(&mut store, D, 2, 4, agents * frames, 7, &mut rng).unwrap();
        let grid = random_grid(&mut rng, agents, frames);
        let adj = adjacency(&mut rng, agents, frames);

        let mut t = Tape::new(&store);
        let h = t.constant(masked(&grid, random(&mut rng, grid.rows(), SAFETY_CHANNELS, 2.0)));
        let j = t.constant(masked(&grid, random(&mut rng, grid.rows(), BEHAVIOR_CHANNELS, 2.0)));
        let p = t.constant(masked(&grid, random(&mut rng, grid.rows(), POOLING_CHANNELS, 2.0)));
        let os = safety.forward(&mut t, h, &adj, &grid).unwrap();
        let ob = behavior.forward(&mut t, j, os, &grid).unwrap();
        let op = priority.forward(&mut t, p, &grid).unwrap();
        let oi = lean.forward(&mut t, [os, ob, op], &grid).unwrap();
        for out in [os, ob, op, oi] {
            prop_assert_eq!(t.shape(out), &[grid.rows(), D][..]);
            for r in 0..grid.rows() {
                let row = t.value(out).row(r);
                if grid.mask[r] {
                    prop_assert!(row.iter().all(|v| v.is_finite()));
                } else {
                    prop_assert!(row.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn mixture_weights_sum_to_one(seed in any::<u64>(), scale in 0.01..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = Decoder::new(&mut store, 2 * D, D, 2, 9, 5, 0.2, &mut rng).unwrap();
        let mut t = Tape::new(&store);
        let ctx = t.constant(random(&mut rng, 1, 2 * D, scale));
        let out = dec.forward(&mut t, ctx, &[[0.0, 0.0]; 5]).unwrap();
        let pred = out.to_prediction(&t);
        prop_assert_eq!(pred.weights.len(), 9);
        prop_assert!(pred.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((pred.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        let table = pred.maneuver_table().unwrap();
        prop_assert!((table.iter().flatten().sum::<f64>() - 1.0).abs() <= 1e-6);
        for steps in &pred.steps {
            for g in steps {
                prop_assert!(g.sigma[0] > 0.0 && g.sigma[1] > 0.0 && g.rho.abs() < 1.0);
            }
        }
    }

    #[test]
    fn rmse_matches_scalar_loop(seed in any::<u64>(), n in 1usize..40, horizon in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = 25;
        let track = |rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
            (0..steps).map(|_| [rng.gen_range(-100.0..100.0), rng.gen_range(-10.0..10.0)]).collect()
        };
        let preds: Vec<_> = (0..n).map(|_| track(&mut rng)).collect();
        let gts: Vec<_> = (0..n).map(|_| track(&mut rng)).collect();
        let got = rmse_metric(&preds, &gts, horizon as f64, 0.2).unwrap();

        let step = horizon * 5 - 1;
        let mut sum = 0.0;
        for i in 0..n {
            let dx = preds[i][step][0] - gts[i][step][0];
            let dy = preds[i][step][1] - gts[i][step][1];
            sum += dx * dx + dy * dy;
        }
        let expect = (sum / n as f64).sqrt();
        prop_assert!((got - expect).abs() <= 1e-12);
    }

    #[test]
    fn schedule_is_periodic_and_bounded(period in 1usize..50, step in 0usize..500, lr_max in 1e-4..1e-1f64, ratio in 0.0..1.0f64) {
        let s = CosineRestarts { lr_max, lr_min: lr_max * ratio, period };
        let lr = s.lr(step);
        prop_assert!(lr >= s.lr_min - 1e-15 && lr <= s.lr_max + 1e-15);
        prop_assert_eq!(lr, s.lr(step + period));
        prop_assert!((s.lr(step - step % period) - lr_max).abs() <= 1e-15);
    }
}
