//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see the lines for passing
//! criteria as well).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tenreg::cptensor::{rank1_from_vectors, CpTensor};
use tenreg::harness::benchmarks::{planted_tensor, BenchmarkKind};
use tenreg::harness::{run_active_loop, RunConfig, RunMode};
use tenreg::polybasis::{self, BasisFamily};
use tenreg::regression::{
    self, eta_update, loss_h, penalty_g, penalty_ghat, Dataset, SolverConfig,
};
use tenreg::sampling::{self, Design, SelectionMode};
use tenreg::surrogate::SurrogateModel;

fn report(criterion: usize, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("acceptance {criterion} ({name}): PASS"),
        Err(reason) => println!("acceptance {criterion} ({name}): FAIL — {reason}"),
    }
    if let Err(reason) = result {
        panic!("acceptance criterion {criterion} failed: {reason}");
    }
}

fn check(ok: bool, reason: impl Fn() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(reason())
    }
}

fn random_cp(rng: &mut ChaCha8Rng, dims: usize, rows: usize, rank: usize) -> CpTensor {
    CpTensor::new(
        (0..dims)
            .map(|_| DMatrix::from_fn(rows, rank, |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn basis_vectors(basis: BasisFamily, point: &[f64]) -> Vec<Vec<f64>> {
    point
        .iter()
        .map(|&x| polybasis::eval_basis_vector(basis, x).unwrap())
        .collect()
}

/// Relative l2 error of `model` against `truth` on fresh standard-normal
/// points, both evaluated in standardized space.
fn relative_error_vs_truth(
    model: &CpTensor,
    truth: &CpTensor,
    basis: BasisFamily,
    n: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut num = 0.0;
    let mut den = 0.0;
    for _ in 0..n {
        let b = basis_vectors(basis, &random_point(&mut rng, truth.dims()));
        let y = truth.inner_rank1(&b).unwrap();
        let yhat = model.inner_rank1(&b).unwrap();
        num += (yhat - y) * (yhat - y);
        den += y * y;
    }
    (num / den).sqrt()
}

#[test]
fn acceptance_01_variational_identity() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    'outer: for i in 0..100 {
        let dims = rng.gen_range(1..=4);
        let rank = rng.gen_range(1..=5);
        let rows = rng.gen_range(1..=4);
        let q = [0.3, 0.5, 1.0][i % 3];
        let x = random_cp(&mut rng, dims, rows, rank);
        let z = x.group_norms();
        let eta = eta_update(&z, q, 1e-8).unwrap();
        let g = penalty_g(&x, q).unwrap();
        let ghat = penalty_ghat(&x, &eta, q).unwrap();
        if (ghat - g).abs() > 1e-10 * g.abs().max(1.0) {
            result = Err(format!(
                "instance {i}: ghat {ghat} vs g {g} (q={q}, R={rank}, d={dims})"
            ));
            break 'outer;
        }
    }
    report(1, "variational-equality identity", result);
}

#[test]
fn acceptance_02_basis_orthonormality() {
    let basis = BasisFamily::hermite(8);
    let (nodes, weights) = polybasis::quadrature_rule(basis, 20).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=8 {
        for j in 0..=8 {
            let gram: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| {
                    w * polybasis::eval_univariate(basis, i, x).unwrap()
                        * polybasis::eval_univariate(basis, j, x).unwrap()
                })
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram - target).abs());
        }
    }
    report(
        2,
        "Hermite Gram identity",
        check(worst <= 1e-10, || format!("worst Gram deviation {worst:e}")),
    );
}

#[test]
fn acceptance_03_gradient_finite_differences() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-5;
    'outer: for i in 0..100 {
        let d = rng.gen_range(1..=5);
        let p = rng.gen_range(1..=3);
        let rank = rng.gen_range(1..=3);
        let basis = BasisFamily::hermite(p);
        let coeffs = random_cp(&mut rng, d, p + 1, rank);
        let standardization: Vec<(f64, f64)> = (0..d)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)))
            .collect();
        let model = SurrogateModel::new(coeffs, basis, standardization).unwrap();
        let point = random_point(&mut rng, d);
        let grad = model.gradient(&point).unwrap();
        for j in 0..d {
            let mut plus = point.clone();
            let mut minus = point.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (model.predict(&plus).unwrap() - model.predict(&minus).unwrap())
                / (2.0 * h);
            if (grad[j] - fd).abs() > 1e-6 * grad[j].abs().max(1.0) {
                result = Err(format!(
                    "pair {i}, component {j}: analytic {} vs fd {fd}",
                    grad[j]
                ));
                break 'outer;
            }
        }
    }
    report(3, "gradient vs central finite differences", result);
}

#[test]
fn acceptance_04_monotone_descent() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    'outer: for i in 0..20 {
        let d = rng.gen_range(2..=6);
        let n = rng.gen_range(50..=400);
        let basis = BasisFamily::hermite(2);
        let truth = random_cp(&mut rng, d, 3, 2);
        let points: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, d)).collect();
        let values: Vec<f64> = points
            .iter()
            .map(|p| {
                truth.inner_rank1(&basis_vectors(basis, p)).unwrap()
                    + 0.01 * rng.gen_range(-1.0..1.0)
            })
            .collect();
        let data = Dataset::new(points, values).unwrap();
        let q = [0.3, 0.5, 1.0][i % 3];
        let mut cfg = SolverConfig::new(rng.gen_range(1..=4), q, 1e-3 * n as f64);
        cfg.seed = i as u64;
        let fit = regression::fit(&data, basis, &cfg).unwrap();
        for w in fit.step_objectives.windows(2) {
            if w[1] > w[0] + 1e-9 * (1.0 + w[0].abs()) {
                result = Err(format!(
                    "run {i}: objective rose from {} to {}",
                    w[0], w[1]
                ));
                break 'outer;
            }
        }
    }
    report(4, "monotone descent of the surrogate objective", result);
}

#[test]
fn acceptance_05_rank_recovery() {
    let started = std::time::Instant::now();
    let basis = BasisFamily::hermite(2);
    let d = 6;
    let n = 300;
    let mut successes = 0;
    let mut summary = Vec::new();
    for seed in 0..10u64 {
        let truth = planted_tensor(d, 1000 + seed);
        let unit = sampling::latin_hypercube(n, d, 2000 + seed);
        let points = sampling::to_standard_normal(&unit);
        let values: Vec<f64> = points
            .iter()
            .map(|p| truth.inner_rank1(&basis_vectors(basis, p)).unwrap())
            .collect();
        let data = Dataset::new(points, values).unwrap();
        let mut cfg = SolverConfig::new(5, 0.5, 1e-3 * n as f64);
        cfg.seed = seed;
        // the sweep budget is generous: some seeds converge slowly and the
        // criterion is about the fixed point, not the iteration count
        cfg.max_sweeps = 1000;
        let fit = regression::fit(&data, basis, &cfg).unwrap();
        let err = relative_error_vs_truth(&fit.model, &truth, basis, 10_000, 3000 + seed);
        summary.push((fit.estimated_rank, err));
        if fit.estimated_rank == 2 && err <= 1e-2 {
            successes += 1;
        }
    }
    let elapsed = started.elapsed();
    let mut result = check(successes >= 8, || {
        format!("only {successes}/10 seeds recovered rank 2 at error <= 1e-2: {summary:?}")
    });
    if result.is_ok() {
        result = check(elapsed.as_secs() < 60, || {
            format!("runtime {elapsed:?} exceeds the 60 s budget")
        });
    }
    report(5, "planted rank-2 recovery in >= 8/10 seeds", result);
}

#[test]
fn acceptance_06_structural_counts() {
    let counts = polybasis::count_basis(57, 2);
    let params = CpTensor::zeros(57, 3, 5).unwrap().parameter_count();
    let mut result = check(counts.total_degree == 1711, || {
        format!("total-degree count {} != 1711", counts.total_degree)
    });
    if result.is_ok() {
        result = check(params == 855, || format!("parameter count {params} != 855"));
    }
    report(6, "structural counts 1711 and 855", result);
}

#[test]
fn acceptance_07_moments_vs_monte_carlo() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    'outer: for i in 0..20 {
        let d = rng.gen_range(1..=3);
        let rank = rng.gen_range(1..=3);
        let mut coeffs = random_cp(&mut rng, d, 3, rank);
        // damp the quadratic coefficients: high-degree products have heavy
        // tails, and the Monte-Carlo variance estimate would need far more
        // than 1e6 samples to resolve them to 2%
        for k in 0..d {
            let mut f = coeffs.factor(k).clone();
            for r in 0..rank {
                f[(2, r)] *= 0.3;
            }
            coeffs = coeffs.with_factor(k, f).unwrap();
        }
        // splice in a constant offset so the mean is well away from zero
        // and the relative comparison is meaningful
        let offset = 2.0 + rng.gen_range(0.0..1.0);
        let mut e1 = vec![0.0; 3];
        e1[0] = 1.0;
        let mut constant = rank1_from_vectors(&vec![e1; d]).unwrap();
        constant = constant
            .with_factor(0, constant.factor(0) * offset)
            .unwrap();
        let factors: Vec<DMatrix<f64>> = coeffs
            .factors()
            .iter()
            .zip(constant.factors())
            .map(|(a, b)| {
                let mut joined = DMatrix::zeros(3, rank + 1);
                joined.view_mut((0, 0), (3, rank)).copy_from(a);
                joined.view_mut((0, rank), (3, 1)).copy_from(b);
                joined
            })
            .collect();
        let coeffs = CpTensor::new(factors).unwrap();
        let basis = BasisFamily::hermite(2);
        let model = SurrogateModel::unstandardized(coeffs, basis).unwrap();
        let (mean, variance) = model.moments();

        let m = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let y = model.predict(&random_point(&mut rng, d)).unwrap();
            sum += y;
            sum_sq += y * y;
        }
        let mc_mean = sum / m as f64;
        let mc_var = sum_sq / m as f64 - mc_mean * mc_mean;
        if (mean - mc_mean).abs() > 0.02 * mc_mean.abs() {
            result = Err(format!("model {i}: mean {mean} vs MC {mc_mean}"));
            break 'outer;
        }
        if (variance - mc_var).abs() > 0.02 * mc_var.abs() {
            result = Err(format!("model {i}: variance {variance} vs MC {mc_var}"));
            break 'outer;
        }
    }
    report(7, "analytic moments vs 1e6-sample Monte Carlo", result);
}

#[test]
fn acceptance_08_dense_oracle_equivalence() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    'outer: for i in 0..50 {
        let dims = rng.gen_range(1..=4);
        let rows = rng.gen_range(1..=4); // p <= 3
        let rank_x = rng.gen_range(1..=4);
        let rank_y = rng.gen_range(1..=4);
        let x = random_cp(&mut rng, dims, rows, rank_x);
        let y = random_cp(&mut rng, dims, rows, rank_y);
        let fx = x.to_full().unwrap();
        let fy = y.to_full().unwrap();

        let dense_inner: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
        let fast = x.inner_cp(&y).unwrap();
        if (fast - dense_inner).abs() > 1e-10 * dense_inner.abs().max(1.0) {
            result = Err(format!("instance {i}: inner_cp {fast} vs {dense_inner}"));
            break 'outer;
        }

        // rank-1 inner product against the dense odometer sum
        let b: Vec<Vec<f64>> = (0..dims)
            .map(|_| (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut dense_r1 = 0.0;
        let mut index = vec![0usize; dims];
        for &entry in &fx {
            let weight: f64 = index.iter().zip(&b).map(|(&ik, bk)| bk[ik]).product();
            dense_r1 += entry * weight;
            for k in (0..dims).rev() {
                index[k] += 1;
                if index[k] < rows {
                    break;
                }
                index[k] = 0;
            }
        }
        let fast_r1 = x.inner_rank1(&b).unwrap();
        if (fast_r1 - dense_r1).abs() > 1e-10 * dense_r1.abs().max(1.0) {
            result = Err(format!("instance {i}: inner_rank1 {fast_r1} vs {dense_r1}"));
            break 'outer;
        }

        // loss against brute-force residuals computed through to_full
        let basis = BasisFamily::hermite(rows - 1);
        let n = rng.gen_range(1..=20);
        let points: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, dims)).collect();
        let values: Vec<f64> = points.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data = Dataset::new(points.clone(), values.clone()).unwrap();
        let mut dense_loss = 0.0;
        for (p, v) in points.iter().zip(&values) {
            let bv = basis_vectors(basis, p);
            let mut pred = 0.0;
            let mut index = vec![0usize; dims];
            for &entry in &fx {
                let weight: f64 = index.iter().zip(&bv).map(|(&ik, bk)| bk[ik]).product();
                pred += entry * weight;
                for k in (0..dims).rev() {
                    index[k] += 1;
                    if index[k] < rows {
                        break;
                    }
                    index[k] = 0;
                }
            }
            dense_loss += 0.5 * (pred - v) * (pred - v);
        }
        let fast_loss = loss_h(&x, &data, basis).unwrap();
        if (fast_loss - dense_loss).abs() > 1e-10 * dense_loss.abs().max(1.0) {
            result = Err(format!("instance {i}: loss_h {fast_loss} vs {dense_loss}"));
            break 'outer;
        }
    }
    report(8, "dense-oracle equivalence", result);
}

#[test]
fn acceptance_09_sampling_correctness() {
    let mut result = Ok(());
    let mut rng = ChaCha8Rng::seed_from_u64(109);

    // exhaustive nearest-neighbor oracle on 100 random configurations
    'oracle: for i in 0..100 {
        let d = rng.gen_range(1..=5);
        let n_centers = rng.gen_range(1..=20);
        let n_pool = rng.gen_range(1..=200);
        let centers: Vec<Vec<f64>> = (0..n_centers)
            .map(|c| {
                // spread the centers so they are pairwise distinct
                let mut p = random_point(&mut rng, d);
                p[0] += 10.0 * c as f64;
                p
            })
            .collect();
        let pool: Vec<Vec<f64>> = (0..n_pool).map(|_| random_point(&mut rng, d)).collect();
        let design = Design::new(centers.clone()).unwrap();
        let est = sampling::assign_pool(&design, pool.clone()).unwrap();
        for (m, &assigned) in est.assignment().iter().enumerate() {
            let dist = |c: &[f64]| -> f64 {
                c.iter()
                    .zip(&pool[m])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            };
            let best = (0..n_centers)
                .min_by(|&a, &b| dist(&centers[a]).total_cmp(&dist(&centers[b])))
                .unwrap();
            if assigned != best {
                result = Err(format!(
                    "config {i}: candidate {m} assigned to {assigned}, oracle says {best}"
                ));
                break 'oracle;
            }
        }
    }

    // Latin hypercube stratification for n in {4, 16, 256}
    if result.is_ok() {
        'strata: for n in [4usize, 16, 256] {
            let design = sampling::latin_hypercube(n, 3, 42);
            for dim in 0..3 {
                let mut counts = vec![0usize; n];
                for p in &design {
                    let slice = ((p[dim] * n as f64).floor() as usize).min(n - 1);
                    counts[slice] += 1;
                }
                if counts.iter().any(|&c| c != 1) {
                    result = Err(format!("n={n}, dim {dim}: strata counts {counts:?}"));
                    break 'strata;
                }
            }
        }
    }

    // the three hand-worked 1-d selection examples
    if result.is_ok() {
        let basis = BasisFamily::hermite(2);
        let design = Design::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let pool = vec![vec![0.1], vec![0.2], vec![0.9]];
        let est = sampling::assign_pool(&design, pool).unwrap();

        let explore = sampling::select_explore(&est).unwrap();
        let quad = rank1_from_vectors(&[vec![0.0, 0.0, 1.0]]).unwrap();
        let exploit = sampling::select_exploit(&est, &quad, basis).unwrap();
        let batch =
            sampling::select_batch(&est, None, basis, 2, SelectionMode::Explore).unwrap();

        if explore != vec![0.2] {
            result = Err(format!("explore picked {explore:?}, expected [0.2]"));
        } else if exploit != vec![0.2] {
            result = Err(format!("exploit picked {exploit:?}, expected [0.2]"));
        } else if batch != vec![vec![0.2], vec![0.9]] {
            result = Err(format!("batch picked {batch:?}, expected [[0.2], [0.9]]"));
        }
    }

    report(9, "sampling correctness", result);
}

#[test]
fn acceptance_10_end_to_end_soft_comparison() {
    let started = std::time::Instant::now();

    let config = |seed: u64, mode: RunMode| {
        let mut cfg = RunConfig::builtin(10, BenchmarkKind::QuadExp);
        cfg.mode = mode;
        cfg.seed = seed;
        cfg
    };

    let final_err = |mode: RunMode, seed: u64| -> f64 {
        let history = run_active_loop(&config(seed, mode)).unwrap();
        history.rounds.last().unwrap().test_err
    };

    let mut exploit: Vec<f64> = (0..10).map(|s| final_err(RunMode::Exploit, s)).collect();
    let mut random: Vec<f64> = (0..10).map(|s| final_err(RunMode::Random, s)).collect();
    exploit.sort_by(f64::total_cmp);
    random.sort_by(f64::total_cmp);
    let median = |v: &[f64]| 0.5 * (v[4] + v[5]);
    let med_exploit = median(&exploit);
    let med_random = median(&random);

    let mut result = check(med_exploit <= med_random, || {
        format!("median exploit error {med_exploit} > median random error {med_random}")
    });

    // repeated runs at a fixed seed must reproduce the history CSV
    // byte-for-byte, apart from the wall-clock column
    if result.is_ok() {
        let strip_wall = |csv: String| -> String {
            csv.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let a = strip_wall(run_active_loop(&config(0, RunMode::Exploit)).unwrap().to_csv());
        let b = strip_wall(run_active_loop(&config(0, RunMode::Exploit)).unwrap().to_csv());
        result = check(a == b, || "repeated runs produced different histories".into());
    }

    let elapsed = started.elapsed();
    if result.is_ok() {
        result = check(elapsed.as_secs() < 600, || {
            format!("runtime {elapsed:?} exceeds the 10 min budget")
        });
    }

    report(
        10,
        "adaptive exploit beats random at matched budget; deterministic histories",
        result,
    );
}
