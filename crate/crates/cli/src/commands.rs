use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use arteval_core::bench::{self, BenchConfig, BenchError, BenchPorts};
use arteval_core::dataset::{lint_issue_cap, lint_unlabeled_artifact, parse_records};
use arteval_core::gateway::{
    always_consistent_judge, EndpointConfig, HttpPort, Port, Secret, ENV_API_KEY, ENV_ASSESSOR_URL,
    ENV_JUDGE_URL, ENV_VERIFIER_URL,
};
use arteval_core::metrics;
use arteval_core::reward::final_rewards_batch;
use arteval_core::sampler::{Bucket, BucketIndex, MultiBucketSampler, SamplerConfig};
use arteval_core::{Exec, RewardBreakdown, RewardWeights};

use crate::error::{domain, usage, CliResult, ResultExt};
use crate::io::{self, Prediction};
use crate::mock::{MockAssessor, MockVerifier};
use crate::{BenchArgs, MetricsArgs, RewardArgs, SampleArgs, ValidateArgs};

pub fn validate(args: &ValidateArgs, exec: Exec) -> CliResult {
    let text = io::read_to_string(&args.dataset)?;
    let (mut records, mut errors, mut warnings) = (0, 0, 0);
    for (line, res) in parse_records(&text, exec) {
        match res {
            Ok(rec) => {
                records += 1;
                let lints = [
                    lint_issue_cap(&rec.labels, args.max_issues),
                    lint_unlabeled_artifact(&rec.labels),
                ];
                for msg in lints.into_iter().flatten() {
                    warnings += 1;
                    println!("line {line}: warning: {}: {msg}", rec.id);
                }
            }
            Err(e) => {
                errors += 1;
                println!("{e}");
            }
        }
    }
    println!("{records} valid records, {errors} errors, {warnings} warnings");
    if errors > 0 || (args.strict && warnings > 0) {
        return Err(domain(format!(
            "{} failed validation",
            args.dataset.display()
        )));
    }
    Ok(())
}

pub fn sample(args: &SampleArgs, exec: Exec) -> CliResult {
    let records = io::load_gt(&args.dataset, Some(args.split), exec)?;
    let mut cfg = SamplerConfig::new(args.batch_size, args.seed);
    if !args.hard_positive_tags.is_empty() {
        cfg.hard_positive_tags = args.hard_positive_tags.clone();
    }
    cfg.hard_positive_multiplier = args.multiplier as usize;
    cfg.validate().usage()?;

    let index = BucketIndex::build(&records, &cfg);
    println!(
        "bucket pool sizes ({} records, {} outside every bucket):",
        records.len(),
        index.excluded()
    );
    for (bucket, n) in index.histogram() {
        println!(
            "  {bucket:<12} {n:>6}  ({} per batch)",
            cfg.count_for(bucket)
        );
    }

    let sampler = MultiBucketSampler::new(&index, cfg).domain()?;
    let rows = sampler.take(args.n_batches).enumerate().map(|(i, batch)| {
        let mut buckets = Map::new();
        for b in Bucket::ALL {
            let ids: Vec<Value> = batch
                .entries
                .iter()
                .filter(|e| e.bucket == b)
                .map(|e| Value::from(index.id(e.record)))
                .collect();
            buckets.insert(b.to_string(), Value::Array(ids));
        }
        serde_json::json!({"batch": i, "buckets": buckets})
    });
    io::write_jsonl(&args.out, rows)?;
    println!("wrote {} batches to {}", args.n_batches, args.out.display());
    Ok(())
}

fn endpoint(
    flag: Option<&str>,
    env_var: &str,
    max_inflight: u64,
    seed: u64,
) -> CliResult<EndpointConfig> {
    let mut cfg = match flag {
        Some(url) => {
            let mut cfg = EndpointConfig::new(url);
            if let Ok(key) = std::env::var(ENV_API_KEY) {
                cfg.api_key = Secret::new(key);
            }
            cfg
        }
        None => EndpointConfig::from_env(env_var).usage()?,
    };
    cfg.max_inflight = max_inflight as usize;
    cfg.retry.jitter_seed = seed;
    cfg.validate().usage()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RewardRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    reward: RewardBreakdown,
}

pub fn reward(args: &RewardArgs, exec: Exec) -> CliResult {
    let judge: Box<dyn Port> = if args.mock_judge {
        Box::new(always_consistent_judge())
    } else {
        let cfg = endpoint(
            args.judge_url.as_deref(),
            ENV_JUDGE_URL,
            args.max_inflight,
            args.seed,
        )?;
        Box::new(HttpPort::new(cfg).usage()?)
    };

    let gt = io::load_gt(&args.gt, args.split, exec)?;
    let preds = io::load_predictions(&args.pred)?;
    let paired = io::pair_by_id(&gt, &preds)?;
    let mut inputs = Vec::with_capacity(paired.len());
    for (rec, pred) in &paired {
        let parsed = pred
            .parsed()
            .ok_or_else(|| domain(format!("{}: reward needs a raw `response`", rec.id)))?;
        inputs.push((rec.labels.clone(), parsed));
    }

    let results = final_rewards_batch(
        &inputs,
        judge.as_ref(),
        &RewardWeights::default(),
        exec,
        args.max_inflight as usize,
    );
    let mut rows = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for ((rec, _), res) in paired.iter().zip(results) {
        match res {
            Ok(reward) => rows.push(RewardRow {
                id: &rec.id,
                reward,
            }),
            Err(e) => failed.push(format!("{}: {e}", rec.id)),
        }
    }
    if !failed.is_empty() {
        return Err(domain(format!(
            "judge failed for:\n  {}",
            failed.join("\n  ")
        )));
    }

    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.reward.final_reward).sum::<f64>() / rows.len() as f64
    };
    io::write_jsonl(&args.out, &rows)?;
    println!("scored {} pairs, mean final reward {mean:.4}", rows.len());
    Ok(())
}

pub fn metrics(args: &MetricsArgs, exec: Exec) -> CliResult {
    let gt = io::load_gt(&args.gt, args.split, exec)?;
    let preds = io::load_predictions(&args.pred)?;
    let pairs: Vec<_> = io::pair_by_id(&gt, &preds)?
        .into_iter()
        .map(|(rec, pred): (_, &Prediction)| (rec.labels.clone(), pred.labels()))
        .collect();
    let report = metrics::report(&pairs, exec);

    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    io::write_string(&args.out, &json)?;
    if let Some(csv) = &args.csv {
        io::write_string(csv, &report.to_csv(&args.model))?;
    }
    println!(
        "{} pairs ({} unparsable): macro F1 {:.4}, micro F1 {:.4}, artifact F1 {:.4}",
        report.n_pairs,
        report.n_unparsable,
        report.macro_avg.f1,
        report.micro.f1,
        report.artifact_binary.f1
    );
    Ok(())
}

fn bench_error(e: BenchError) -> crate::error::CliError {
    match e {
        BenchError::Io { .. } => usage(e),
        other => domain(other),
    }
}

pub fn bench(args: &BenchArgs, exec: Exec) -> CliResult {
    let ports: (Box<dyn Port>, Box<dyn Port>) = if args.mock {
        (Box::new(MockVerifier), Box::new(MockAssessor))
    } else {
        let v = endpoint(
            args.verifier_url.as_deref(),
            ENV_VERIFIER_URL,
            args.max_inflight,
            args.seed,
        )?;
        let a = endpoint(
            args.assessor_url.as_deref(),
            ENV_ASSESSOR_URL,
            args.max_inflight,
            args.seed,
        )?;
        (
            Box::new(HttpPort::new(v).usage()?),
            Box::new(HttpPort::new(a).usage()?),
        )
    };
    if !args.images.is_dir() {
        return Err(usage(format!(
            "{} is not a directory",
            args.images.display()
        )));
    }

    let set = bench::load_prompts(&args.prompts).map_err(bench_error)?;
    if set.partial {
        let counts: BTreeMap<_, _> = set
            .per_category()
            .into_iter()
            .map(|(c, n)| (c.as_str(), n))
            .collect();
        eprintln!("warning: partial prompt set, per-category counts {counts:?}");
    }

    let cfg = BenchConfig {
        exec,
        max_inflight: args.max_inflight as usize,
        audit_path: args.audit.clone(),
        resume: args.resume,
        ..BenchConfig::default()
    };
    let run = bench::run_bench(
        &set.prompts,
        &args.images,
        BenchPorts {
            verifier: ports.0.as_ref(),
            assessor: ports.1.as_ref(),
        },
        &cfg,
    )
    .map_err(bench_error)?;

    io::write_string(&args.report, &(run.report.to_json_pretty() + "\n"))?;
    println!("{}", run.report);
    let ex = run.report.excluded;
    println!(
        "{} prompts, {} resumed, {} generation failures, {} transport failures",
        set.prompts.len(),
        run.resumed,
        ex.generation_failed,
        ex.transport_failed
    );
    Ok(())
}
