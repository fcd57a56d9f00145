use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use lpht_core::nonsymmetric::io::{write_cohort, write_cohort_csv};
use lpht_core::nonsymmetric::{simulate_cohort, Cohort};
use lpht_core::symmetric::io::{write_signals, SignalFile};
use lpht_core::{NonSymmetricMechanism, SeedTree, SymmetricMechanism};
use serde_json::json;

use crate::inputs::read_distribution;
use crate::manifest::RunManifest;
use crate::{CohortFormat, MechanizeArgs, Mechanism, EXIT_ACCEPT};

const STREAM: u64 = 0x6d65_6368;

pub fn run(args: &MechanizeArgs) -> Result<u8> {
    let p = read_distribution(&args.dist)?;
    let mut config = json!({
        "mechanism": format!("{:?}", args.mechanism).to_lowercase(),
        "n": args.n,
        "epsilon": args.epsilon,
        "T": p.len(),
    });
    if args.mechanism == Mechanism::Nonsymmetric {
        config["format"] = json!(format!("{:?}", args.format).to_lowercase());
    }
    let manifest = RunManifest::new("mechanize", config, Some(args.seed))
        .input(&args.dist)
        .output(&args.out);
    let mut rng = SeedTree::new(args.seed).child(STREAM).rng();
    let mut out = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    match args.mechanism {
        Mechanism::Symmetric => {
            let mech = SymmetricMechanism::new(p.len(), args.epsilon)?;
            let n = usize::try_from(args.n)?;
            let signals = mech.sample_signals(&p, n, &mut rng)?;
            let file = SignalFile {
                t: p.len(),
                epsilon: Some(args.epsilon),
                extra_header: vec![format!("manifest={}", manifest.to_value())],
                signals,
            };
            write_signals(&mut out, &file)?;
        }
        Mechanism::Nonsymmetric => {
            let mech = NonSymmetricMechanism::new(args.epsilon)?;
            let cohort = if args.n == 0 {
                Cohort {
                    t: p.len(),
                    epsilon: args.epsilon,
                    users: Vec::new(),
                }
            } else {
                simulate_cohort(&p, usize::try_from(args.n)?, &mech, &mut rng)?
            };
            match args.format {
                CohortFormat::Binary => write_cohort(&mut out, &cohort)?,
                CohortFormat::Csv => write_cohort_csv(&mut out, &cohort)?,
            }
            manifest.write_sidecar(&args.out)?;
        }
    }
    out.flush()?;
    Ok(EXIT_ACCEPT)
}
