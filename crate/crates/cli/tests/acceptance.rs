//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p lpht-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use lpht_core::chi2::{chi2_cdf, chi2_quantile};
use lpht_core::experiments::{
    fit_exponents, run_null_experiment, run_sample_complexity_experiment, with_threads, Evaluator, ExperimentConfig, Summary,
    EXP_NULL, EXP_SAMPLE_COMPLEXITY,
};
use lpht_core::mle::{closed_form_symmetric, pgd_solve, ClosedForm, LogLoss, NonSymLogLoss, SolverConfig, SymmetricLogLoss};
use lpht_core::nonsymmetric::{
    eta_for, sample_theta, simulate_cohort, simulate_users_for_types, NonSymUser, SimulationMode, ThetaAccumulator,
};
use lpht_core::prob::{paninski_perturb, product_vector, sample_multinomial, sample_types, tv_distance, two_thirds_norm};
use lpht_core::symmetric::{affine_inverse, affine_map};
use lpht_core::testers::{ns_identity_tester, ns_independence_tester, rates, sym_independence_tester, RobustConfig, SymmetricIdentityTester};
use lpht_core::{DomainSpec, NonSymmetricMechanism, ProbVector, SeedTree, SignPattern, SignalHistogram, SymmetricMechanism};
use rand::Rng;

const SEED: u64 = 20_190_101;

type Verdict = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Verdict);

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

fn exp1() -> Verdict {
    let cfg = ExperimentConfig {
        trials: 2000,
        ..ExperimentConfig::for_experiment(EXP_NULL)
    };
    let start = Instant::now();
    let runs = with_threads(1, || run_null_experiment(&cfg)).map_err(err)?.map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let s: Summary = runs[0].summary();
    let ok = (9.0..=11.0).contains(&s.mean) && (15.0..=25.0).contains(&s.variance) && secs <= 120.0;
    Ok((ok, format!("mean {:.3}, variance {:.3}, {secs:.1}s single-threaded", s.mean, s.variance)))
}

fn exponents() -> Verdict {
    let mut cfg = ExperimentConfig::for_experiment(EXP_SAMPLE_COMPLEXITY);
    cfg.sweeps.t = vec![5, 10, 20];
    cfg.sweeps.alpha = vec![0.1, 0.2, 0.4];
    cfg.sweeps.epsilon = vec![0.1, 0.2, 0.4];
    let start = Instant::now();
    let results = run_sample_complexity_experiment(&cfg, Evaluator::PTest).map_err(err)?;
    let e = fit_exponents(&results);
    let (ct, ca, ce) = match (e.c_t, e.c_alpha, e.c_epsilon) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Ok((false, format!("missing exponent: {e:?}"))),
    };
    let ok = (ct - 1.5).abs() <= 0.4 && (ca + 2.0).abs() <= 0.4 && (ce + 2.0).abs() <= 0.4;
    let ns: Vec<String> = results.iter().map(|r| r.n_star.to_string()).collect();
    Ok((
        ok,
        format!(
            "c_T {ct:.3}, c_alpha {ca:.3}, c_eps {ce:.3}; n* = [{}]; {:.1}s",
            ns.join(", "),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn ns_identity() -> Verdict {
    let (t, eps, alpha) = (10, 0.25, 0.2);
    let n = rates::ns_identity(t, alpha, eps, 4);
    let mech = NonSymmetricMechanism::new(eps).map_err(err)?;
    let p = ProbVector::uniform(t);
    let seeds = SeedTree::new(SEED).child(3);
    let trials = 200;
    let (mut accepts, mut rejects) = (0, 0);
    for i in 0..trials as u64 {
        let mut rng = seeds.child(i).rng();
        let theta = sample_theta(&p, n, &mech, SimulationMode::PerUser, &mut rng).map_err(err)?;
        accepts += usize::from(ns_identity_tester(&p, &theta, alpha).map_err(err)?.accepted());
        let q = paninski_perturb(&p, alpha, &mut rng).map_err(err)?;
        let theta = sample_theta(&q, n, &mech, SimulationMode::PerUser, &mut rng).map_err(err)?;
        rejects += usize::from(!ns_identity_tester(&p, &theta, alpha).map_err(err)?.accepted());
    }
    let (a, r) = (rate(accepts, trials), rate(rejects, trials));
    Ok((a >= 2.0 / 3.0 && r >= 2.0 / 3.0, format!("n = {n}: accept {a:.3} under p, reject {r:.3} under q")))
}

fn sym_identity() -> Verdict {
    let (t, eps, alpha) = (10, 0.25, 0.2);
    let n = rates::sym_identity(t, alpha, eps, 4);
    let mech = SymmetricMechanism::new(t, eps).map_err(err)?;
    let p = ProbVector::uniform(t);
    let seeds = SeedTree::new(SEED).child(4);
    let tester = SymmetricIdentityTester::calibrate(&p, alpha, &mech, n, &RobustConfig::default(), &mut seeds.child(u64::MAX).rng())
        .map_err(err)?;
    let trials = 200;
    let (mut accepts, mut rejects) = (0, 0);
    for i in 0..trials as u64 {
        let mut rng = seeds.child(i).rng();
        let hist = SignalHistogram::from_counts(sample_multinomial(&mech.phi_raw(p.as_slice()), n, &mut rng));
        accepts += usize::from(tester.test(&hist).map_err(err)?.accepted());
        let q = paninski_perturb(&p, alpha, &mut rng).map_err(err)?;
        let hist = SignalHistogram::from_counts(sample_multinomial(&mech.phi_raw(q.as_slice()), n, &mut rng));
        rejects += usize::from(!tester.test(&hist).map_err(err)?.accepted());
    }
    let (a, r) = (rate(accepts, trials), rate(rejects, trials));
    Ok((a >= 2.0 / 3.0 && r >= 2.0 / 3.0, format!("n = {n}: accept {a:.3} under phi(p), reject {r:.3} under phi(q)")))
}

fn independence() -> Verdict {
    let spec = DomainSpec::new(vec![2, 2]).map_err(err)?;
    let (eps, alpha) = (0.5, 0.3);
    let n_sym = rates::sym_independence(&spec, alpha, eps, 4);
    let n_ns = rates::ns_independence(&spec, alpha, eps, 4);
    let smech = SymmetricMechanism::new(4, eps).map_err(err)?;
    let nmech = NonSymmetricMechanism::new(eps).map_err(err)?;
    let arms: [(&str, Vec<f64>, bool); 3] = [
        ("uniform", product_vector(&[&[0.5, 0.5], &[0.5, 0.5]]), true),
        ("(.5,.5)x(.7,.3)", product_vector(&[&[0.5, 0.5], &[0.7, 0.3]]), true),
        ("half-diagonal", vec![0.5, 0.0, 0.0, 0.5], false),
    ];
    let trials = 100;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, dist, product)) in arms.iter().enumerate() {
        let q = ProbVector::new(dist.clone()).map_err(err)?;
        let seeds = SeedTree::new(SEED).child(5).child(k as u64);
        let (mut sym_right, mut ns_right) = (0, 0);
        for i in 0..trials as u64 {
            let mut rng = seeds.child(i).rng();
            let hist = SignalHistogram::from_counts(sample_multinomial(&smech.phi_raw(q.as_slice()), n_sym, &mut rng));
            // an InsufficientSamples error is a wrong answer
            let sym = sym_independence_tester(&spec, &hist, alpha, &smech, 2000, &mut rng).map(|o| o.accepted());
            sym_right += usize::from(sym.is_ok_and(|a| a == *product));
            let theta = sample_theta(&q, n_ns, &nmech, SimulationMode::PerUser, &mut rng).map_err(err)?;
            let ns = ns_independence_tester(&spec, &theta, alpha).map_err(err)?.accepted();
            ns_right += usize::from(ns == *product);
        }
        let (s, r) = (rate(sym_right, trials), rate(ns_right, trials));
        ok &= s >= 2.0 / 3.0 && r >= 2.0 / 3.0;
        let verb = if *product { "accept" } else { "reject" };
        parts.push(format!("{name}: {verb} sym {s:.2} ns {r:.2}"));
    }
    Ok((ok, format!("n_sym = {n_sym}, n_ns = {n_ns}; {}", parts.join("; "))))
}

fn interior(t: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn max_fd_error(loss: &dyn LogLoss, direct: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> f64 {
    let (_, g) = loss.value_grad(p);
    let h = 1e-6;
    (0..p.len())
        .map(|i| {
            let mut up = p.to_vec();
            let mut dn = p.to_vec();
            up[i] += h;
            dn[i] -= h;
            ((direct(&up) - direct(&dn)) / (2.0 * h) - g[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn mle_equivalence() -> Verdict {
    let mut rng = SeedTree::new(SEED).child(6).rng();
    let (mut matched, mut worst_tv, mut tries) = (0, 0.0f64, 0);
    while matched < 50 && tries < 500 {
        tries += 1;
        let t = rng.random_range(2..=6);
        let mech = SymmetricMechanism::new(t, rng.random_range(0.3..3.0)).map_err(err)?;
        let counts = sample_multinomial(&mech.phi_raw(&interior(t, &mut rng)), 10_000, &mut rng);
        let hist = SignalHistogram::from_counts(counts);
        let ClosedForm::Inside(exact) = closed_form_symmetric(&hist, &mech).map_err(err)? else {
            continue;
        };
        let report = pgd_solve(&SymmetricLogLoss::new(hist, mech).map_err(err)?, &SolverConfig::default()).map_err(err)?;
        worst_tv = worst_tv.max(tv_distance(&report.p_hat, exact.as_slice()).map_err(err)?);
        matched += 1;
    }
    let mut worst_fd = 0.0f64;
    for k in 0..100 {
        let t = 2 + k % 5;
        let eps = rng.random_range(0.1..3.0);
        let point = interior(t, &mut rng);
        if k % 2 == 0 {
            let mech = SymmetricMechanism::new(t, eps).map_err(err)?;
            let counts: Vec<u64> = (0..t).map(|_| rng.random_range(1..1000)).collect();
            let n: u64 = counts.iter().sum();
            let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(counts.clone()), mech).map_err(err)?;
            let direct = |p: &[f64]| {
                -counts.iter().zip(p).map(|(&c, &x)| c as f64 / n as f64 * (mech.rho() + mech.gamma() * x).ln()).sum::<f64>()
            };
            worst_fd = worst_fd.max(max_fd_error(&loss, &direct, &point));
        } else {
            let mech = NonSymmetricMechanism::new(eps).map_err(err)?;
            let cohort = simulate_cohort(&ProbVector::uniform(t), 200, &mech, &mut rng).map_err(err)?;
            let loss = NonSymLogLoss::new(&cohort.users, mech.eta()).map_err(err)?;
            let users: &[NonSymUser] = &cohort.users;
            let direct = |p: &[f64]| {
                -users
                    .iter()
                    .map(|u| u.likelihood_vector(mech.eta()).iter().zip(p).map(|(g, x)| g * x).sum::<f64>().ln())
                    .sum::<f64>()
                    / users.len() as f64
            };
            worst_fd = worst_fd.max(max_fd_error(&loss, &direct, &point));
        }
    }
    let ok = matched == 50 && worst_tv <= 1e-4 && worst_fd <= 1e-6;
    Ok((ok, format!("{matched} instances, max TV {worst_tv:.2e}; max gradient error {worst_fd:.2e} over 100 points")))
}

fn invariants() -> Verdict {
    let mut rng = SeedTree::new(SEED).child(7).rng();
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok && !failed.contains(&name) {
            failed.push(name);
        }
    };
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    for _ in 0..500 {
        let t = rng.random_range(2..12);
        let eps = rng.random_range(0.01..5.0);
        let mech = SymmetricMechanism::new(t, eps).map_err(err)?;
        let p = interior(t, &mut rng);
        let q = interior(t, &mut rng);
        let back = mech.phi_inverse(&mech.phi_raw(&p)).map_err(err)?;
        check("phi round trip", l1(&back, &p) <= 1e-10);
        let lhs = tv_distance(&mech.phi_raw(&p), &mech.phi_raw(&q)).map_err(err)?;
        check("TV contraction", (lhs - mech.gamma() * tv_distance(&p, &q).map_err(err)?).abs() <= 1e-12);
        let z = affine_inverse(mech.gamma(), &p).map_err(err)?;
        check("z sums to 1", (z.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        check("z maps back", l1(&affine_map(mech.gamma(), &z), &p) <= 1e-10);

        let signs: Vec<i8> = (0..t).map(|_| if rng.random() { 1 } else { -1 }).collect();
        let y: i8 = if rng.random() { 1 } else { -1 };
        let user = NonSymUser::new(SignPattern::from_signs(&signs).map_err(err)?, y).map_err(err)?;
        let eta = eta_for(eps);
        let c = user.contribution().to_signs();
        let g = user.likelihood_vector(eta);
        check(
            "contribution y b",
            (0..t).all(|x| c[x] == y * signs[x] && ((g[x] - 0.5) / eta - c[x] as f64).abs() < 1e-12),
        );

        // scalar form; the vector quasi-norm is not subadditive
        let (a, b): (f64, f64) = (rng.random_range(1e-9..1e6), rng.random_range(1e-9..1e6));
        check("2/3 subadditivity", (a + b).powf(2.0 / 3.0) <= (a.powf(2.0 / 3.0) + b.powf(2.0 / 3.0)) * (1.0 + 1e-12));
        let v: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let direct = v.iter().map(|x| x.abs().powf(2.0 / 3.0)).sum::<f64>().powf(1.5);
        check("2/3 norm", (two_thirds_norm(&v) - direct).abs() <= 1e-9 * direct.max(1.0));

        let t2 = rng.random_range(2..5);
        let (p2, q2) = (interior(t2, &mut rng), interior(t2, &mut rng));
        let tensor = l1(&product_vector(&[&p, &p2]), &product_vector(&[&q, &q2]));
        check("tensor L1 bound", tensor <= l1(&p, &q) + l1(&p2, &q2) + 1e-12);

        let k = rng.random_range(1..150u32);
        let level = rng.random_range(0.001..0.999);
        let x = chi2_quantile(k, level).map_err(err)?;
        check("chi2 cdf/quantile", (chi2_cdf(k, x).map_err(err)? - level).abs() <= 1e-10);
    }

    // E[theta] = 2 eta f and Var <= 1.1/n over resampled mechanisms
    let (t, n, eps, reps) = (8, 500, 1.0, 10_000);
    let mech = NonSymmetricMechanism::new(eps).map_err(err)?;
    let p = ProbVector::new(interior(t, &mut rng)).map_err(err)?;
    let types = sample_types(&p, n, &mut rng);
    let mut f = vec![0.0; t];
    for &x in &types {
        f[x] += 1.0 / n as f64;
    }
    let mut sum = vec![0.0; t];
    let mut sq = vec![0.0; t];
    for _ in 0..reps {
        let mut acc = ThetaAccumulator::new(t);
        for u in simulate_users_for_types(&types, t, &mech, &mut rng) {
            acc.add(&u);
        }
        let theta = acc.finish(mech.eta()).map_err(err)?.theta;
        for x in 0..t {
            sum[x] += theta[x];
            sq[x] += theta[x] * theta[x];
        }
    }
    let tol = 4.0 * ((t as f64).ln() / n as f64).sqrt();
    for x in 0..t {
        let mean = sum[x] / reps as f64;
        let var = (sq[x] - reps as f64 * mean * mean) / (reps - 1) as f64;
        check("unbiasedness", (mean - 2.0 * mech.eta() * f[x]).abs() <= tol);
        check("variance <= 1.1/n", var <= 1.1 / n as f64);
    }
    if failed.is_empty() {
        Ok((true, "all invariant families hold".into()))
    } else {
        Ok((false, format!("violated: {}", failed.join(", "))))
    }
}

/// Runs every subcommand in `dir` and returns each command's stdout, exit
/// code, and the bytes of every file it left behind.
fn cli_script(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let bin = env!("CARGO_BIN_EXE_lpht");
    let d = |name: &str| dir.join(name).display().to_string();
    fs::write(dir.join("dist.json"), r#"{"weights": [0.4, 0.3, 0.2, 0.1]}"#).map_err(err)?;
    fs::write(dir.join("hyp.json"), r#"{"p": [0.4, 0.3, 0.2, 0.1], "alpha": 0.3, "epsilon": 1.0}"#).map_err(err)?;
    fs::write(dir.join("hyp2.json"), r#"{"alpha": 0.3, "epsilon": 1.0, "feature_sizes": [2, 2]}"#).map_err(err)?;
    let mech = |m: &str| ["--mechanism".to_string(), m.to_string()];
    let scripts: Vec<Vec<String>> = vec![
        [vec!["mechanize".into(), "--dist".into(), d("dist.json"), "--n".into(), "3000".into(), "--epsilon".into(), "1".into()], mech("symmetric").to_vec(), vec!["--out".into(), d("sig.txt")]].concat(),
        [vec!["mechanize".into(), "--dist".into(), d("dist.json"), "--n".into(), "3000".into(), "--epsilon".into(), "1".into()], mech("nonsymmetric").to_vec(), vec!["--out".into(), d("cohort.bin")]].concat(),
        [vec!["mechanize".into(), "--dist".into(), d("dist.json"), "--n".into(), "500".into(), "--epsilon".into(), "1".into(), "--format".into(), "csv".into()], mech("nonsymmetric").to_vec(), vec!["--out".into(), d("cohort.csv")]].concat(),
        [vec!["test-identity".into(), "--hypothesis".into(), d("hyp.json"), "--input".into(), d("sig.txt")], mech("symmetric").to_vec(), vec!["--out".into(), d("id_sym.json")]].concat(),
        [vec!["test-identity".into(), "--hypothesis".into(), d("hyp.json"), "--input".into(), d("cohort.bin")], mech("nonsymmetric").to_vec()].concat(),
        [vec!["test-independence".into(), "--hypothesis".into(), d("hyp2.json"), "--input".into(), d("sig.txt")], mech("symmetric").to_vec(), vec!["--out".into(), d("ind_sym.json")]].concat(),
        [vec!["test-independence".into(), "--hypothesis".into(), d("hyp2.json"), "--input".into(), d("cohort.bin")], mech("nonsymmetric").to_vec()].concat(),
        [vec!["mle".into(), "--input".into(), d("sig.txt")], mech("symmetric").to_vec(), vec!["--out".into(), d("mle_sym.json")]].concat(),
        [vec!["mle".into(), "--input".into(), d("sig.txt"), "--closed-form".into()], mech("symmetric").to_vec()].concat(),
        [vec!["mle".into(), "--input".into(), d("cohort.bin")], mech("nonsymmetric").to_vec(), vec!["--out".into(), d("mle_ns.json")]].concat(),
        vec!["experiment".into(), "1".into(), "--t".into(), "100".into(), "--out".into(), d("")],
        vec!["experiment".into(), "2".into(), "--t".into(), "50".into(), "--sweep-n".into(), "500,1000".into(), "--out".into(), d("")],
        vec!["experiment".into(), "3".into(), "--stub".into(), "linear:3000".into(), "--out".into(), d("")],
        vec!["experiment".into(), "4".into(), "--t".into(), "30".into(), "--n".into(), "2000".into(), "--out".into(), d("")],
    ];
    let mut out = BTreeMap::new();
    for (i, args) in scripts.iter().enumerate() {
        let o = Command::new(bin).args(args).output().map_err(err)?;
        let code = o.status.code().unwrap_or(-1);
        if code == 2 || code < 0 {
            return Err(format!("`lpht {}` failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr)));
        }
        out.insert(format!("{i:02} {} (stdout, exit {code})", args[0]), o.stdout);
    }
    for entry in fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).map_err(err)?);
    }
    Ok(out)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(err)?;
    let first = cli_script(dir.path())?;
    let second = cli_script(dir.path())?;
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    let ok = differing.is_empty() && first.len() == second.len();
    let detail = if ok {
        format!("{} stdout streams and files byte-identical across two runs", first.len())
    } else {
        format!("differences in {differing:?}")
    };
    Ok((ok, detail))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("Experiment 1 null statistic", exp1),
        ("sample-complexity exponents", exponents),
        ("non-symmetric identity tester", ns_identity),
        ("symmetric identity tester", sym_identity),
        ("independence testers", independence),
        ("MLE oracle equivalence", mle_equivalence),
        ("algebraic invariants", invariants),
        ("CLI determinism", determinism),
    ];
    let mut all = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        println!(
            "{} criterion {}: {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
