//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any fails.

use std::time::Instant;

use fkomt_core::omt::{radical_inverse, GridSpec};
use fkomt_core::statistic::{Provenance, StatVector};
use fkomt_core::{
    analyze, build_grid, cf_cvm_pair, ecf_cvm_oracle, evaluate, generate, interpret,
    solve_assignment, tau_map, Curve, FunctionalSample, Method, PermutationPlan, Process,
    QuadratureRule, ReplicaSet, RunConfig, ScenarioSpec, StatKind, TestOutcome, TimeGrid, VChoice,
    WeightMatrix,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("closed form vs oracle", closed_form_vs_oracle),
        ("assignment exactness", assignment_exactness),
        ("grid structure", grid_structure),
        ("minimal p-value", minimal_p_value),
        ("empirical size", empirical_size),
        ("power", power),
        ("invariance", invariance),
        ("determinism", determinism),
        ("default configuration on K = 3", default_configuration),
        ("Halton radical inverse", halton_values),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}; {secs:.1}s)", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    j: usize,
    shift: f64,
    label: &str,
) -> FunctionalSample {
    let curves = (0..n)
        .map(|_| Curve::new((0..j).map(|_| shift + normal(rng)).collect()).unwrap())
        .collect();
    FunctionalSample::new(label, curves).unwrap()
}

fn closed_form_vs_oracle() -> Outcome {
    let results: Vec<(f64, f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|inst| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let j = rng.random_range(2..=8);
            let (nj, nl) = (rng.random_range(2..=10), rng.random_range(2..=10));
            let mut points: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
            points.sort_by(f64::total_cmp);
            let rule = if inst % 2 == 0 {
                QuadratureRule::Trapezoid
            } else {
                QuadratureRule::RiemannLeft
            };
            let grid = TimeGrid::new(points, rule).unwrap();
            let a = DMatrix::from_fn(j, j, |_, _| normal(&mut rng));
            let v = WeightMatrix::new(&a * a.transpose() * (4.0 / j as f64), Provenance::Custom)
                .unwrap();
            let shift = [0.0, 0.5, 1.5][inst as usize % 3];
            let sj = random_sample(&mut rng, nj, j, 0.0, "a");
            let sl = random_sample(&mut rng, nl, j, shift, "b");
            let closed = cf_cvm_pair(&sj, &sl, &v, &grid).unwrap();
            let oracle = ecf_cvm_oracle(&sj, &sl, &v, &grid, 100_000, 77 + inst).unwrap();
            (closed, oracle.value, oracle.std_error)
        })
        .collect();
    let agree = results
        .iter()
        .filter(|(c, o, se)| (c - o).abs() <= 4.0 * se)
        .count();
    ensure(agree >= 48, || format!("{agree}/50 within 4 SE, need 48"))?;
    Ok(format!("{agree}/50 within 4 oracle SE"))
}

/// Cost summed in cloud order, as the solver reports it.
fn cost_of(cloud: &[Vec<f64>], grid: &[Vec<f64>], target: &[usize]) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            cloud[i]
                .iter()
                .zip(&grid[g])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .sum()
}

/// All permutations of `0..n` in lexicographic order, with their costs.
fn enumerate_costs(cloud: &[Vec<f64>], grid: &[Vec<f64>]) -> Vec<(f64, Vec<usize>)> {
    let n = cloud.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![(cost_of(cloud, grid, &perm), perm.clone())];
    // next lexicographic permutation
    while let Some(i) = (0..n.saturating_sub(1))
        .rev()
        .find(|&i| perm[i] < perm[i + 1])
    {
        let k = (i + 1..n).rev().find(|&k| perm[k] > perm[i]).unwrap();
        perm.swap(i, k);
        perm[i + 1..].reverse();
        out.push((cost_of(cloud, grid, &perm), perm.clone()));
    }
    out
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn assignment_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes = [
        (1, 2),
        (2, 2),
        (3, 2),
        (2, 4),
        (4, 2),
        (7, 1),
        (1, 8),
        (2, 3),
    ];
    for inst in 0..20 {
        let (n_r, n_s) = shapes[inst % shapes.len()];
        let d = 2 + inst % 3;
        let grid = build_grid(&GridSpec::new(n_r, n_s, d).unwrap())
            .unwrap()
            .points;
        let cloud = random_cloud(&mut rng, n_r * n_s, d);
        let solved = solve_assignment(&cloud, &grid).unwrap();
        let best = enumerate_costs(&cloud, &grid)
            .into_iter()
            .map(|(c, _)| c)
            .fold(f64::INFINITY, f64::min);
        ensure(solved.cost == best, || {
            format!(
                "instance {inst}: solver {} vs enumeration {best}",
                solved.cost
            )
        })?;
    }
    Ok("20/20 instances equal the enumerated optimum".into())
}

fn grid_structure() -> Outcome {
    let g = build_grid(&GridSpec::new(40, 25, 3).unwrap()).unwrap();
    ensure(g.points.len() == 1000, || {
        format!("{} points", g.points.len())
    })?;
    for i in 1..=40 {
        let r = i as f64 / 41.0;
        let count = g
            .points
            .iter()
            .filter(|p| (p.iter().map(|v| v * v).sum::<f64>().sqrt() - r).abs() <= 1e-12)
            .count();
        ensure(count == 25, || format!("radius {i}/41 has {count} points"))?;
    }
    ensure(g.points.iter().flatten().all(|&c| c >= 0.0), || {
        "negative coordinate".into()
    })?;
    let origin = tau_map(&[0.0, 0.0], 3).unwrap();
    let corner = tau_map(&[1.0, 1.0], 3).unwrap();
    ensure(origin == vec![1.0, 0.0, 0.0], || {
        format!("tau(0,0) = {origin:?}")
    })?;
    ensure(corner == vec![0.0, 0.0, 1.0], || {
        format!("tau(1,1) = {corner:?}")
    })?;
    Ok("1000 points, 25 per radius i/41, tau endpoints exact".into())
}

fn replica_set(t0: Vec<f64>, cloud: Vec<Vec<f64>>) -> ReplicaSet {
    let pairs: Vec<(usize, usize)> = (0..t0.len()).map(|k| (1, k + 2)).collect();
    let sv = |values| StatVector {
        values,
        pairs: pairs.clone(),
    };
    ReplicaSet {
        plan: PermutationPlan::new(cloud.len(), 0).unwrap(),
        t0: sv(t0),
        replicas: cloud.into_iter().map(sv).collect(),
    }
}

fn minimal_p_value() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set = replica_set(vec![100.0; 3], random_cloud(&mut rng, 999, 3));
    let TestOutcome::Omt(r) = evaluate(&set, 40, 25).map_err(|e| e.to_string())? else {
        return Err("expected a transport outcome".into());
    };
    let n_r = 40;
    ensure(r.p_hat == 1.0 / n_r as f64 && r.p_hat == 0.025, || {
        format!("p_hat = {}", r.p_hat)
    })?;
    ensure(r.p_tilde == 1.0 - 40.0 / 41.0, || {
        format!("p_tilde = {}", r.p_tilde)
    })?;
    Ok(format!("p_hat = {}, p_tilde = {}", r.p_hat, r.p_tilde))
}

fn simulation_config(seed: u64) -> RunConfig {
    RunConfig {
        statistic: StatKind::CfCvm,
        v_matrix: VChoice::InvOverall,
        rank: 9,
        replicas: 199,
        n_r: 20,
        n_s: 10,
        seed,
        ..Default::default()
    }
}

struct Study {
    rejection_rate: f64,
    /// Mean of `D²(1,3) + D²(2,3)`.
    group3_mass: f64,
}

fn study(process: Process, seed_base: u64) -> Result<Study, String> {
    const REPS: u64 = 500;
    let runs: Vec<(bool, f64)> = (0..REPS)
        .into_par_iter()
        .map(|rep| {
            let data = generate(&ScenarioSpec {
                sizes: vec![20, 20, 20],
                grid_len: 24,
                process: process.clone(),
                seed: seed_base + rep,
            })
            .map_err(|e| e.to_string())?;
            let report = analyze(&data, &simulation_config(seed_base + 7919 * rep))
                .map_err(|e| e.to_string())?
                .report;
            let reject = interpret(&report, 0.05).map_err(|e| e.to_string())?.reject;
            let mass = report
                .pairs
                .iter()
                .filter(|p| p.pair.1 == 3)
                .map(|p| p.contribution.unwrap_or(0.0))
                .sum();
            Ok((reject, mass))
        })
        .collect::<Result<_, String>>()?;
    let n = runs.len() as f64;
    Ok(Study {
        rejection_rate: runs.iter().filter(|r| r.0).count() as f64 / n,
        group3_mass: runs.iter().map(|r| r.1).sum::<f64>() / n,
    })
}

fn null_rate() -> Result<f64, String> {
    static RATE: std::sync::OnceLock<Result<f64, String>> = std::sync::OnceLock::new();
    RATE.get_or_init(|| study(Process::Brownian, 50_000).map(|s| s.rejection_rate))
        .clone()
}

fn empirical_size() -> Outcome {
    let rate = null_rate()?;
    ensure((0.025..=0.075).contains(&rate), || {
        format!("rejection rate {rate}")
    })?;
    Ok(format!(
        "null rejection rate {rate:.3} over 500 replications"
    ))
}

fn power() -> Outcome {
    let null = null_rate()?;
    let alt = study(
        Process::Scale {
            sigma: vec![1.0, 1.0, 2.0],
        },
        60_000,
    )?;
    ensure(alt.rejection_rate > null, || {
        format!("power {} not above null rate {null}", alt.rejection_rate)
    })?;
    ensure(alt.rejection_rate >= 0.30, || {
        format!("power {}", alt.rejection_rate)
    })?;
    ensure(alt.group3_mass >= 0.6, || {
        format!("mean D²(1,3) + D²(2,3) = {}", alt.group3_mass)
    })?;
    Ok(format!(
        "power {:.3} vs null {null:.3}, mean group-3 contribution {:.3}",
        alt.rejection_rate, alt.group3_mass
    ))
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = build_grid(&GridSpec::new(4, 2, 3).unwrap()).unwrap().points;
    let mut checked = 0;
    while checked < 20 {
        let cloud = random_cloud(&mut rng, 8, 3);
        let mut costs = enumerate_costs(&cloud, &grid);
        costs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // unique optimum with a clear gap
        if costs[1].0 - costs[0].0 < 1e-6 {
            continue;
        }
        checked += 1;
        let base = solve_assignment(&cloud, &grid).unwrap().target;
        ensure(base == costs[0].1, || {
            "solver misses the unique optimum".into()
        })?;
        let shift: Vec<f64> = (0..3).map(|_| 10.0 * normal(&mut rng)).collect();
        let variants = [
            cloud
                .iter()
                .map(|p| p.iter().map(|v| v * 1e-4).collect())
                .collect::<Vec<Vec<f64>>>(),
            cloud
                .iter()
                .map(|p| p.iter().map(|v| v * 1e4).collect())
                .collect(),
            cloud
                .iter()
                .map(|p| p.iter().zip(&shift).map(|(v, s)| v + s).collect())
                .collect(),
        ];
        for (name, moved) in ["scale 1e-4", "scale 1e4", "translation"]
            .iter()
            .zip(variants)
        {
            let target = solve_assignment(&moved, &grid).unwrap().target;
            ensure(target == base, || format!("bijection changed under {name}"))?;
        }
    }

    let (n_r, n_s) = (20, 10);
    for inst in 0..30 {
        let cloud = random_cloud(&mut rng, n_r * n_s, 2 + inst % 4);
        let (t0, rest) = cloud.split_first().unwrap();
        let set = replica_set(t0.clone(), rest.to_vec());
        let TestOutcome::Omt(r) = evaluate(&set, n_r, n_s).map_err(|e| e.to_string())? else {
            return Err("expected a transport outcome".into());
        };
        let total: f64 = r.contributions.iter().sum();
        ensure((total - 1.0).abs() <= 1e-12, || {
            format!("contributions sum to {total}")
        })?;
        ensure(r.nonconformity == (1.0 - r.p_tilde).powi(2), || {
            "nonconformity identity".into()
        })?;
        let on_grid = (1..=n_r).any(|i| r.p_tilde == 1.0 - i as f64 / (n_r + 1) as f64);
        ensure(on_grid, || format!("p_tilde {} off the grid", r.p_tilde))?;
    }
    Ok("20 unique-optimum instances invariant; 30 score identities exact".into())
}

fn determinism() -> Outcome {
    let data = generate(&ScenarioSpec {
        sizes: vec![12, 15, 10],
        grid_len: 16,
        process: Process::Scale {
            sigma: vec![1.0, 1.3, 1.0],
        },
        seed: 8,
    })
    .map_err(|e| e.to_string())?;
    for v_matrix in [VChoice::InvOverall, VChoice::InvPooled, VChoice::Identity] {
        for statistic in [StatKind::CfCvm, StatKind::CovSqrt] {
            let config = RunConfig {
                v_matrix: v_matrix.clone(),
                statistic,
                ..simulation_config(2024)
            };
            let payload = |threads| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| analyze(&data, &config).unwrap().report.payload().unwrap())
            };
            let first = payload(1);
            for threads in [1, 2, 4, 8] {
                ensure(payload(threads) == first, || {
                    format!("{v_matrix:?}/{statistic:?} differs at {threads} threads")
                })?;
            }
        }
    }
    Ok("6 configurations byte-identical across runs and 1 to 8 threads".into())
}

fn default_configuration() -> Outcome {
    let data = generate(&ScenarioSpec {
        sizes: vec![20, 20, 20],
        grid_len: 24,
        process: Process::MeanShift {
            delta: 0.5,
            groups: vec![2],
        },
        seed: 9,
    })
    .map_err(|e| e.to_string())?;
    let config = RunConfig::default();
    let report = analyze(&data, &config).map_err(|e| e.to_string())?.report;
    ensure(report.method == Method::Omt, || {
        "not a transport outcome".into()
    })?;
    let pairs: Vec<_> = report.pairs.iter().map(|p| p.pair).collect();
    ensure(pairs == [(1, 2), (1, 3), (2, 3)], || {
        format!("pairs {pairs:?}")
    })?;
    let steps = report.p_hat * 40.0;
    ensure(
        (steps - steps.round()).abs() < 1e-9 && report.p_hat >= 0.025 && report.p_hat <= 1.0,
        || format!("p_hat {} off the grid k/40", report.p_hat),
    )?;
    let total: f64 = report
        .contributions()
        .ok_or("missing contributions")?
        .iter()
        .sum();
    ensure((total - 1.0).abs() <= 1e-12, || {
        format!("contributions sum to {total}")
    })?;
    Ok(format!("p_hat = {}, contributions sum to 1", report.p_hat))
}

fn halton_values() -> Outcome {
    let base2: Vec<f64> = (1..=5).map(|i| radical_inverse(i, 2)).collect();
    let base3: Vec<f64> = (1..=5).map(|i| radical_inverse(i, 3)).collect();
    let want2 = [1.0 / 2.0, 1.0 / 4.0, 3.0 / 4.0, 1.0 / 8.0, 5.0 / 8.0];
    let want3 = [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 4.0 / 9.0, 7.0 / 9.0];
    ensure(base2 == want2, || format!("base 2: {base2:?}"))?;
    ensure(base3 == want3, || format!("base 3: {base3:?}"))?;
    Ok("first five values in bases 2 and 3 exact".into())
}
