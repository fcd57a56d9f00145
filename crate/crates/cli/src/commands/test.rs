use anyhow::{anyhow, bail, Result};
use lpht_core::testers::{
    ns_identity_tester, ns_independence_tester, sym_identity_tester, sym_independence_tester, Decision, RobustConfig,
};
use lpht_core::seed::StreamRng;
use lpht_core::{DomainSpec, ProbVector, SeedTree, SymmetricMechanism, TestOutcome};
use serde_json::json;

use crate::inputs::{check_epsilon, read_hypothesis, read_nonsymmetric, read_symmetric, theta_of, Hypothesis};
use crate::manifest::{attach, emit, write_json, RunManifest};
use crate::{Mechanism, TestArgs, EXIT_ACCEPT, EXIT_REJECT};

const STREAM: u64 = 0x7465_7374;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Identity,
    Independence,
}

pub fn run(args: &TestArgs, kind: Kind) -> Result<u8> {
    let hyp = read_hypothesis(&args.hypothesis)?;
    let name = match kind {
        Kind::Identity => "test-identity",
        Kind::Independence => "test-independence",
    };
    let config = json!({
        "mechanism": format!("{:?}", args.mechanism).to_lowercase(),
        "alpha": hyp.alpha,
        "epsilon": hyp.epsilon,
        "calibration_trials": args.calibration_trials,
        "confidence": args.confidence,
    });
    let mut manifest = RunManifest::new(name, config, Some(args.seed))
        .input(&args.hypothesis)
        .input(&args.input);
    if let Some(out) = &args.out {
        manifest = manifest.output(out);
    }
    let mut rng = SeedTree::new(args.seed).child(STREAM).rng();

    let outcome = match kind {
        Kind::Identity => {
            let p = hyp
                .p
                .clone()
                .ok_or_else(|| anyhow!("identity testing needs `p` in the hypothesis"))?
                .into_prob()?;
            identity(args, &hyp, &p, &mut rng)?
        }
        Kind::Independence => {
            let sizes = hyp
                .feature_sizes
                .clone()
                .ok_or_else(|| anyhow!("independence testing needs `feature_sizes` in the hypothesis"))?;
            let spec = DomainSpec::new(sizes)?;
            independence(args, &hyp, &spec, &mut rng)?
        }
    };

    let value = attach(serde_json::to_value(&outcome)?, &manifest);
    emit(&value)?;
    if let Some(out) = &args.out {
        write_json(out, &value)?;
    }
    Ok(match outcome.decision {
        Decision::Accept => EXIT_ACCEPT,
        Decision::Reject => EXIT_REJECT,
    })
}

fn identity(args: &TestArgs, hyp: &Hypothesis, p: &ProbVector, rng: &mut StreamRng) -> Result<TestOutcome> {
    match args.mechanism {
        Mechanism::Symmetric => {
            let input = read_symmetric(&args.input)?;
            if input.hist.len() != p.len() {
                bail!("alphabet mismatch: hypothesis has T = {}, signals have T = {}", p.len(), input.hist.len());
            }
            check_epsilon(input.epsilon, hyp.epsilon)?;
            let mech = SymmetricMechanism::new(p.len(), hyp.epsilon)?;
            let cfg = RobustConfig {
                confidence: args.confidence,
                calibration_trials: args.calibration_trials,
            };
            Ok(sym_identity_tester(p, &input.hist, hyp.alpha, &mech, &cfg, rng)?)
        }
        Mechanism::Nonsymmetric => {
            let input = read_nonsymmetric(&args.input, Some(p.len()), Some(hyp.epsilon))?;
            let theta = theta_of(&input, p.len(), hyp.epsilon)?;
            Ok(ns_identity_tester(p, &theta, hyp.alpha)?)
        }
    }
}

fn independence(args: &TestArgs, hyp: &Hypothesis, spec: &DomainSpec, rng: &mut StreamRng) -> Result<TestOutcome> {
    let t = spec.total();
    match args.mechanism {
        Mechanism::Symmetric => {
            let input = read_symmetric(&args.input)?;
            if input.hist.len() != t {
                bail!("alphabet mismatch: feature sizes give T = {t}, signals have T = {}", input.hist.len());
            }
            check_epsilon(input.epsilon, hyp.epsilon)?;
            let mech = SymmetricMechanism::new(t, hyp.epsilon)?;
            Ok(sym_independence_tester(spec, &input.hist, hyp.alpha, &mech, args.calibration_trials, rng)?)
        }
        Mechanism::Nonsymmetric => {
            let input = read_nonsymmetric(&args.input, Some(t), Some(hyp.epsilon))?;
            let theta = theta_of(&input, t, hyp.epsilon)?;
            Ok(ns_independence_tester(spec, &theta, hyp.alpha)?)
        }
    }
}
