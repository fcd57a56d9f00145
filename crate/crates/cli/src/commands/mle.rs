use anyhow::{anyhow, bail, Result};
use lpht_core::mle::{closed_form_symmetric, pgd_solve, ClosedForm, NonSymLogLoss, SolverConfig, SymmetricLogLoss};
use lpht_core::nonsymmetric::eta_for;
use lpht_core::{Error, SymmetricMechanism};
use serde_json::{json, Value};

use crate::inputs::{read_nonsymmetric, read_symmetric, NonSymmetricInput};
use crate::manifest::{attach, emit, write_json, RunManifest};
use crate::{Mechanism, MleArgs, EXIT_ACCEPT};

pub fn run(args: &MleArgs) -> Result<u8> {
    let mut solver = SolverConfig::default();
    if let Some(m) = args.max_iters {
        solver.max_iters = m;
    }
    if let Some(t) = args.tolerance {
        solver.tolerance = t;
    }
    solver.validate()?;

    let (epsilon, report) = match args.mechanism {
        Mechanism::Symmetric => symmetric(args, &solver)?,
        Mechanism::Nonsymmetric => nonsymmetric(args, &solver)?,
    };
    let config = json!({
        "mechanism": format!("{:?}", args.mechanism).to_lowercase(),
        "epsilon": epsilon,
        "closed_form": args.closed_form,
        "solver": solver,
    });
    let mut manifest = RunManifest::new("mle", config, None).input(&args.input);
    if let Some(out) = &args.out {
        manifest = manifest.output(out);
    }
    let value = attach(report, &manifest);
    emit(&value)?;
    if let Some(out) = &args.out {
        write_json(out, &value)?;
    }
    Ok(EXIT_ACCEPT)
}

fn symmetric(args: &MleArgs, solver: &SolverConfig) -> Result<(f64, Value)> {
    let input = read_symmetric(&args.input)?;
    let epsilon = match (input.epsilon, args.epsilon) {
        (Some(a), Some(b)) if (a - b).abs() > 1e-12 => bail!("signals carry epsilon = {a}, flag says {b}"),
        (Some(e), _) | (None, Some(e)) => e,
        (None, None) => bail!("epsilon is neither in the signal file nor given with --epsilon"),
    };
    let mech = SymmetricMechanism::new(input.hist.len(), epsilon)?;
    if mech.gamma() == 0.0 {
        return Err(Error::NonInvertible.into());
    }
    if args.closed_form {
        let report = match closed_form_symmetric(&input.hist, &mech)? {
            ClosedForm::Inside(p) => json!({"method": "closed_form", "inside_simplex": true, "p_hat": p.as_slice()}),
            ClosedForm::OutsideSimplex(v) => json!({"method": "closed_form", "inside_simplex": false, "p_hat": v}),
        };
        return Ok((epsilon, report));
    }
    let loss = SymmetricLogLoss::new(input.hist, mech)?;
    let report = pgd_solve(&loss, solver)?;
    let mut v = serde_json::to_value(&report)?;
    v["method"] = json!("projected_gradient");
    Ok((epsilon, v))
}

fn nonsymmetric(args: &MleArgs, solver: &SolverConfig) -> Result<(f64, Value)> {
    if args.closed_form {
        bail!("--closed-form applies to the symmetric mechanism only");
    }
    let cohort = match read_nonsymmetric(&args.input, args.domain, args.epsilon)? {
        NonSymmetricInput::Cohort(c) => c,
        NonSymmetricInput::Theta(_) => return Err(anyhow!("the likelihood needs individual reports, not theta")),
    };
    if let Some(e) = args.epsilon {
        if (e - cohort.epsilon).abs() > 1e-12 {
            bail!("cohort carries epsilon = {}, flag says {e}", cohort.epsilon);
        }
    }
    let loss = NonSymLogLoss::new(&cohort.users, eta_for(cohort.epsilon))?;
    let report = pgd_solve(&loss, solver)?;
    let mut v = serde_json::to_value(&report)?;
    v["method"] = json!("projected_gradient");
    Ok((cohort.epsilon, v))
}
