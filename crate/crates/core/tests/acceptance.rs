//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any failure.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use shuffle_codes::bounds::pc_exact_density;
use shuffle_codes::channel::{sample_reads_with, to_frequency, CountVector};
use shuffle_codes::harness::{
    rc_codebook, run_experiment, run_pc_experiment, run_rc_experiment, ExperimentSpec, SweepRow,
};
use shuffle_codes::mathkit::{chi2_divergence, dirichlet_product_moment};
use shuffle_codes::partition::{
    codebook_size, encode, rank, subset_counts, unrank, weight_ladder, MessageIndex, PartitionMessage,
};
use shuffle_codes::random_coding::{draw_simplex_with, generate_codebook, ml_decode};
use shuffle_codes::verify::{run_suite, Suite};
use shuffle_codes::{DerivedSizes, SystemParams};

type Outcome = Result<String, String>;

fn threads() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

/// Every composition of `total` into `parts` nonnegative parts.
fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Multinomial probability of `counts` under `probs`, by direct products.
fn multinomial_prob(counts: &[u64], probs: &[f64]) -> f64 {
    let k: u64 = counts.iter().sum();
    let fact = |x: u64| (1..=x).map(|v| v as f64).product::<f64>();
    let mut p = fact(k);
    for (&c, &q) in counts.iter().zip(probs) {
        p *= q.powi(c as i32) / fact(c);
    }
    p
}

/// Messages of a layout in lexicographic order, by direct recursion.
fn enumerate_messages(num_subsets: usize, subset_size: usize) -> Vec<Vec<u32>> {
    fn go(caps: &mut Vec<usize>, prefix: &mut Vec<u32>, len: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        for j in 0..caps.len() {
            if caps[j] > 0 {
                caps[j] -= 1;
                prefix.push(j as u32 + 1);
                go(caps, prefix, len, out);
                prefix.pop();
                caps[j] += 1;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut vec![subset_size; num_subsets], &mut Vec::new(), num_subsets * subset_size, &mut out);
    out
}

fn criterion_1() -> Outcome {
    for s in 1..=200u64 {
        if !weight_ladder(s).sum().is_one() {
            return Err(format!("ladder s={s} does not sum to 1"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = 0;
    let mut codewords = 0u64;
    'grid: for &m in &[2_000u64, 12_345, 65_536, 250_000, 1_000_000] {
        for &alphabet in &[2u32, 4] {
            for &c1 in &[0.2, 0.3, 0.4] {
                for &rho in &[0.25, 0.5, 1.0] {
                    let params = SystemParams::new(m, alphabet, c1 / f64::from(alphabet).ln(), 1.0, rho).unwrap();
                    let sizes = params.derive().unwrap();
                    let Ok(counts) = subset_counts(m, &sizes) else { continue };
                    let total = codebook_size(&sizes);
                    let indices: Vec<BigUint> = match total.to_u64() {
                        Some(t) if t <= 2_000 => (0..t).map(BigUint::from).collect(),
                        _ => (0..200).map(|_| random_below(&total, &mut rng)).collect(),
                    };
                    for idx in indices {
                        let msg = unrank(&MessageIndex(idx), &sizes).map_err(|e| e.to_string())?;
                        let cw = encode(&msg, &counts, &sizes);
                        if cw.total() != m {
                            return Err(format!("codeword sums to {} != M={m}", cw.total()));
                        }
                        codewords += 1;
                    }
                    points += 1;
                    if points == 50 {
                        break 'grid;
                    }
                }
            }
        }
    }
    if points < 50 {
        return Err(format!("only {points} feasible grid points"));
    }
    Ok(format!("200 ladders exact; {codewords} codewords over {points} points sum to M"))
}

fn random_below(bound: &BigUint, rng: &mut ChaCha8Rng) -> BigUint {
    let mut bytes = vec![0u8; bound.to_bytes_le().len() + 16];
    rng.fill_bytes(&mut bytes);
    BigUint::from_bytes_le(&bytes) % bound
}

fn criterion_2() -> Outcome {
    let mut checked = 0usize;
    for n_eff in [2usize, 4, 6, 8] {
        for s in (1..=n_eff).filter(|s| n_eff % s == 0) {
            let size = n_eff / s;
            let sizes = DerivedSizes::from_layout(s as u64, size as u64, 1);
            let brute = enumerate_messages(s, size);
            if codebook_size(&sizes) != BigUint::from(brute.len()) {
                return Err(format!("codebook size mismatch at n_eff={n_eff}, s={s}"));
            }
            for (i, assignment) in brute.iter().enumerate() {
                let idx = MessageIndex::from(i as u64);
                let msg = unrank(&idx, &sizes).map_err(|e| e.to_string())?;
                if &msg.assignment != assignment || rank(&msg, &sizes).map_err(|e| e.to_string())? != idx {
                    return Err(format!("bijection broken at n_eff={n_eff}, s={s}, index {i}"));
                }
            }
            checked += brute.len();
        }
    }
    let six = codebook_size(&DerivedSizes::from_layout(2, 2, 1));
    let ninety = codebook_size(&DerivedSizes::from_layout(3, 2, 1));
    if six != BigUint::from(6u32) || ninety != BigUint::from(90u32) {
        return Err(format!("reference sizes {six}, {ninety}"));
    }
    let sizes = DerivedSizes::from_layout(5, 6, 1);
    let total = codebook_size(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let idx = MessageIndex(random_below(&total, &mut rng));
        let msg = unrank(&idx, &sizes).map_err(|e| e.to_string())?;
        if rank(&msg, &sizes).map_err(|e| e.to_string())? != idx {
            return Err(format!("round trip failed at {}", idx.0));
        }
    }
    Ok(format!("{checked} exhaustive messages, 10^4 random at n_eff=30 s=5 (|C|={total})"))
}

/// Sort decoder written independently of the library: any zero fails,
/// otherwise the largest counts (ties to the lower index) form subset 1.
fn oracle_pc_decode(counts: &[u64], subset_size: usize) -> Option<Vec<u32>> {
    if counts.contains(&0) {
        return None;
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(counts[i]), i));
    let mut out = vec![0; counts.len()];
    for (pos, &t) in order.iter().enumerate() {
        out[t] = (pos / subset_size) as u32 + 1;
    }
    Some(out)
}

fn criterion_3() -> Outcome {
    // M = 12, K = 8, n = 4 types in 2 subsets of 2
    let beta = 4f64.ln() / (2f64.ln() * 12f64.ln());
    let params = SystemParams::new(12, 2, beta, 8.0 / 12.0, 0.5).unwrap();
    let sizes = params.derive().map_err(|e| e.to_string())?;
    if (sizes.n_eff, sizes.num_subsets, sizes.reads) != (4, 2, 8) {
        return Err(format!("unexpected sizes {sizes:?}"));
    }
    // N(2) = floor(12 * 1/4 / 2) = 1 and subset 1 splits the remaining 10 evenly
    let (high, low) = (5u64, 1u64);
    let counts = subset_counts(12, &sizes).map_err(|e| e.to_string())?;
    let messages = enumerate_messages(2, 2);
    let outcomes = compositions(8, 4);
    let mut exact = 0.0;
    for assignment in &messages {
        let pool: Vec<u64> = assignment.iter().map(|&a| if a == 1 { high } else { low }).collect();
        let msg = PartitionMessage::new(assignment.clone(), &sizes).unwrap();
        if encode(&msg, &counts, &sizes).counts()[..4] != pool[..] {
            return Err("library codeword differs from the hand-derived pool".into());
        }
        let probs: Vec<f64> = pool.iter().map(|&c| c as f64 / 12.0).collect();
        for y in &outcomes {
            if oracle_pc_decode(y, 2).as_ref() != Some(assignment) {
                exact += multinomial_prob(y, &probs) / messages.len() as f64;
            }
        }
    }
    let trials = 1_000_000;
    let result = run_pc_experiment(&ExperimentSpec::partition(params, trials, 33).with_parallelism(threads()))
        .map_err(|e| e.to_string())?;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    let z = (result.error_rate - exact) / se;
    let detail = format!("exact {exact:.6}, MC {:.6} over 10^6, z = {z:.2}", result.error_rate);
    if z.abs() <= 4.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Maximum multinomial likelihood, lowest index on ties.
fn oracle_ml(counts: &[u64], pools: &[Vec<u64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (m, pool) in pools.iter().enumerate() {
        let total: u64 = pool.iter().sum();
        let ll: f64 = counts
            .iter()
            .zip(pool)
            .map(|(&y, &c)| match (y, c) {
                (0, _) => 0.0,
                (_, 0) => f64::NEG_INFINITY,
                _ => y as f64 * (c as f64 / total as f64).ln(),
            })
            .sum();
        if ll > best.1 {
            best = (m, ll);
        }
    }
    best.0
}

fn criterion_4() -> Outcome {
    // M = 30 with n = 3 types and K = 6 reads
    let beta = 3f64.ln() / (2f64.ln() * 30f64.ln());
    let params = SystemParams::new(30, 2, beta, 0.2, 0.5).unwrap();
    let spec = ExperimentSpec::random_coding(params, 2, 1_000_000, 44).with_parallelism(threads());
    let sizes = params.derive().map_err(|e| e.to_string())?;
    if (sizes.n, sizes.reads) != (3, 6) {
        return Err(format!("unexpected sizes {sizes:?}"));
    }
    let book = rc_codebook(&spec).map_err(|e| e.to_string())?;
    let pools: Vec<Vec<u64>> = book.codewords().iter().map(|c| c.counts().counts().to_vec()).collect();
    let mut exact = 0.0;
    for (m, pool) in pools.iter().enumerate() {
        // floor quantization can leave fewer than M molecules in the pool
        let stored: u64 = pool.iter().sum();
        let probs: Vec<f64> = pool.iter().map(|&c| c as f64 / stored as f64).collect();
        for y in compositions(6, 3) {
            if oracle_ml(&y, &pools) != m {
                exact += multinomial_prob(&y, &probs) / pools.len() as f64;
            }
        }
    }
    let result = run_rc_experiment(&spec).map_err(|e| e.to_string())?;
    let se = (exact * (1.0 - exact) / spec.trials as f64).sqrt().max(1e-300);
    let z = (result.error_rate - exact) / se;
    let ok_mc = (result.error_rate - exact).abs() <= 4.0 * se;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disagreements = 0;
    for i in 0..1_000u64 {
        let n = 2 + (i % 7) as usize;
        let m = 20 + rng.random_range(0..200);
        let book = generate_codebook(2 + (i % 6) as usize, n, m, i).map_err(|e| e.to_string())?;
        let pools: Vec<Vec<u64>> = book.codewords().iter().map(|c| c.counts().counts().to_vec()).collect();
        let source = &book.codewords()[rng.random_range(0..book.len())];
        let reads = sample_reads_with(source.counts(), 1 + rng.random_range(0..3 * m), &mut rng).unwrap();
        let decision = ml_decode(&reads, &book).map_err(|e| e.to_string())?;
        disagreements += usize::from(decision.index != oracle_ml(reads.counts(), &pools));
    }
    let detail = format!(
        "book {pools:?}: exact {exact:.6}, MC {:.6}, z = {z:.2}; {disagreements}/1000 likelihood disagreements",
        result.error_rate
    );
    if ok_mc && disagreements == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    // (M, xi, beta) with rho = 0.5 and |A| = 2; the first row is the anchor
    let points = [
        (65_536u64, 1.0, 0.5),
        (4_096, 1.0, 0.5),
        (16_384, 1.0, 0.5),
        (65_536, 0.5, 0.5),
        (262_144, 0.5, 0.5),
        (4_096, 0.5, 0.4),
        (1_048_576, 2.0, 0.6),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, &(m, xi, beta)) in points.iter().enumerate() {
        let params = SystemParams::new(m, 2, beta, xi, 0.5).unwrap();
        let r = run_experiment(&ExperimentSpec::partition(params, 100_000, 500 + i as u64).with_parallelism(threads()))
            .map_err(|e| e.to_string())?;
        let in_band = r.bound_total > 1e-5 && r.bound_total < 0.5;
        let dominated = r.error_rate <= r.bound_total && r.ci_low <= r.bound_total;
        ok &= in_band && dominated;
        lines.push(format!("M={m} xi={xi} beta={beta}: rate {:.2e} <= bound {:.2e}", r.error_rate, r.bound_total));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, k, seed) in [(5usize, 50u64, 6u64), (20, 400, 7)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = draw_simplex_with(n, &mut rng).unwrap();
        let pool = CountVector::new(p.probs().iter().map(|x| (x * 1000.0).floor() as u64 + 1).collect());
        let pmf = pool.to_pmf().unwrap();
        let trials = 100_000u64;
        let values: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed << 32 | t);
                let reads = sample_reads_with(&pool, k, &mut rng).unwrap();
                chi2_divergence(&to_frequency(&reads), &pmf).unwrap()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / trials as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        let target = (n as f64 - 1.0) / k as f64;
        let z = (mean - target) / se;
        ok &= z.abs() <= 3.0;
        lines.push(format!("n={n} K={k}: mean {mean:.6} vs {target:.6} (z = {z:.2})"));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let probes: [&[f64]; 6] = [
        &[1.0, 1.0],
        &[1.0, 1.0, 0.0],
        &[1.0, 2.0, 0.0],
        &[0.5, 0.5, 0.5, 0.5, 0.5],
        &[2.0, 0.0, 1.0, 0.5],
        &[3.0, 1.0],
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, betas) in probes.iter().enumerate() {
        let n = betas.len();
        let closed = dirichlet_product_moment(&vec![1.0; n], betas).map_err(|e| e.to_string())?;
        let draws = 1_000_000u64;
        let (sum, sum_sq) = (0..draws)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64((i as u64) << 40 | t);
                let x = draw_simplex_with(n, &mut rng).unwrap();
                let v: f64 = x.probs().iter().zip(*betas).map(|(p, b)| p.powf(*b)).product();
                (v, v * v)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        let z = (mean - closed) / se;
        ok &= z.abs() <= 3.0;
        lines.push(format!("{betas:?}: {closed:.6} vs {mean:.6} (z = {z:.2})"));
    }
    let sixth = dirichlet_product_moment(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
    ok &= (sixth - 1.0 / 6.0).abs() < 1e-15;
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let outcomes = run_suite(Suite::Mathkit);
    let detail = outcomes
        .iter()
        .map(|o| format!("{}: {}/{} ok", o.name, o.cases - o.failures, o.cases))
        .collect::<Vec<_>>()
        .join("; ");
    if outcomes.len() == 5 && outcomes.iter().all(|o| o.passed() && o.cases > 0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_shufflecode"))
        .args(["density", "--alphabet", "2", "--log-base", "2", "--rho", "1.0,0.5,0.2"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    // (beta, factor, pc column) for rho = 1, 0.5, 0.2
    let marks = [(1.0 / 3.0, 1.0 / 3.0, 2), (0.5, 0.25, 3), (5.0 / 7.0, 1.0 / 7.0, 4)];
    for (beta, factor, col) in marks {
        let row = rows
            .iter()
            .find(|r| (r[0] - beta).abs() < 1e-6)
            .ok_or_else(|| format!("no row at beta={beta}"))?;
        if (row[1] - factor).abs() > 1e-6 || (row[col] - factor).abs() > 1e-6 {
            return Err(format!("row {row:?} misses crossing ({beta}, {factor})"));
        }
    }
    Ok(format!("{} rows; crossings (1/3,1/3), (0.5,0.25), (5/7,1/7) present", rows.len()))
}

fn criterion_10() -> Outcome {
    let c1: f64 = 0.25;
    let beta = c1 / 2f64.ln();
    let target = c1;
    let mut deviations = Vec::new();
    for k in [10u32, 14, 18, 22] {
        let m = 1u64 << k;
        let sizes = SystemParams::new(m, 2, beta, 1.0, 1.0).unwrap().derive().map_err(|e| e.to_string())?;
        deviations.push((k, sizes.n, target - pc_exact_density(&sizes, m)));
    }
    let detail = deviations
        .iter()
        .map(|(k, n, d)| format!("M=2^{k} n={n}: {:.5}", target - d))
        .collect::<Vec<_>>()
        .join(", ");
    let same_side = deviations.iter().all(|d| d.2 > 0.0) || deviations.iter().all(|d| d.2 < 0.0);
    let shrinking = deviations.windows(2).all(|w| w[1].2.abs() < w[0].2.abs());
    if same_side && shrinking {
        Ok(format!("{detail} -> {target}"))
    } else {
        Err(format!("{detail} vs {target}"))
    }
}

fn criterion_11() -> Outcome {
    let pc = SystemParams::new(4_096, 2, 0.5, 0.7, 0.5).unwrap();
    let rc = SystemParams::new(500, 2, 0.5, 0.05, 0.5).unwrap();
    let specs = [ExperimentSpec::partition(pc, 50_000, 11), ExperimentSpec::random_coding(rc, 16, 50_000, 12)];
    for spec in specs {
        let one = run_experiment(&spec.clone().with_parallelism(1)).map_err(|e| e.to_string())?;
        let eight = run_experiment(&spec.clone().with_parallelism(8)).map_err(|e| e.to_string())?;
        let (a, b) = (SweepRow::from(&one).without_timing(), SweepRow::from(&eight).without_timing());
        if a != b {
            return Err(format!("rows differ:\n{a:?}\n{b:?}"));
        }
    }
    Ok("pc and rc rows identical at 1 and 8 threads".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("exact formulas", criterion_1, Duration::from_secs(5)),
        ("rank/unrank bijection", criterion_2, Duration::from_secs(10)),
        ("PC exact oracle", criterion_3, Duration::from_secs(60)),
        ("RC exact oracle", criterion_4, Duration::from_secs(60)),
        ("PC bound dominance", criterion_5, Duration::from_secs(600)),
        ("chi2 mean identity", criterion_6, Duration::from_secs(60)),
        ("Dirichlet moments", criterion_7, Duration::from_secs(60)),
        ("inequality suites", criterion_8, Duration::from_secs(10)),
        ("density crossings", criterion_9, Duration::from_secs(1)),
        ("density trend", criterion_10, Duration::from_secs(30)),
        ("determinism", criterion_11, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d} [over budget {budget:?}]")),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(status == "FAIL");
        println!("criterion {:>2} {status} {name} ({:.2}s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

