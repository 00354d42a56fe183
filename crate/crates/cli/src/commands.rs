use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use tiedheads::embedding::read_emb1_prefix;
use tiedheads::heads::top_k;
use tiedheads::oracle::{histogram_csv, norm_histogram, solve_l0_bruteforce};
use tiedheads::trainer::{compare_heads, train_with_progress, write_checkpoint, TrainConfig};
use tiedheads::{score, EmbVector, EmbeddingMatrix, Error, HeadKind, Vocab};

use crate::suites::{self, CheckRow};
use crate::{
    Command, Common, CompareArgs, HistogramArgs, ModelArgs, RecoverArgs, ScoreArgs, Suite, TrainArgs, VectorArgs,
    VerifyArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(command: Command) -> u8 {
    let (name, common, params) = describe(&command);
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let outcome = fs::create_dir_all(&dir).map_err(Failure::from).and_then(|()| match command {
        Command::Verify(a) => verify(&a, &dir),
        Command::Train(a) => train(&a, &dir),
        Command::Score(a) => score_cmd(&a, &dir),
        Command::Recover(a) => recover(&a, &dir),
        Command::Histogram(a) => histogram(&a, &dir),
        Command::Compare(a) => compare(&a, &dir),
    });
    let code = match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    };
    if let Err(e) = crate::manifest::write(&dir, name, common.seed, &params, code) {
        eprintln!("error: writing manifest: {e}");
        return code.max(EXIT_USAGE);
    }
    code
}

fn describe(command: &Command) -> (&'static str, Common, Value) {
    match command {
        Command::Verify(a) => (
            "verify",
            a.common.clone(),
            json!({ "suite": suite_name(a.suite), "trials": a.trials }),
        ),
        Command::Train(a) => (
            "train",
            a.common.clone(),
            serde_json::to_value(train_config(&a.model, a.head.into(), a.common.seed)).expect("config serializes"),
        ),
        Command::Score(a) => (
            "score",
            a.common.clone(),
            json!({
                "matrix": a.matrix,
                "h": a.vector.h,
                "h_file": a.vector.h_file,
                "head": HeadKind::from(a.head),
                "topk": a.topk,
            }),
        ),
        Command::Recover(a) => (
            "recover",
            a.common.clone(),
            json!({
                "matrix": a.matrix,
                "h": a.vector.h,
                "h_file": a.vector.h_file,
                "max_support": a.max_support,
            }),
        ),
        Command::Histogram(a) => ("histogram", a.common.clone(), json!({ "matrix": a.matrix, "bins": a.bins })),
        Command::Compare(a) => {
            let heads: Vec<HeadKind> = a.heads.iter().map(|&h| h.into()).collect();
            let mut config = serde_json::to_value(train_config(&a.model, HeadKind::Baseline, a.common.seed))
                .expect("config serializes");
            config.as_object_mut().expect("object").remove("head_kind");
            ("compare", a.common.clone(), json!({ "heads": heads, "seeds": a.seeds, "config": config }))
        }
    }
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Properties => "properties",
        Suite::Mc => "mc",
        Suite::Gradcheck => "gradcheck",
        Suite::All => "all",
    }
}

fn train_config(m: &ModelArgs, head_kind: HeadKind, seed: u64) -> TrainConfig {
    TrainConfig {
        dim: m.dim,
        layers: m.layers,
        ffn_dim: m.ffn_dim,
        vocab_size: m.vocab,
        seq_len: m.seq_len,
        batch_size: m.batch_size,
        steps: m.steps,
        peak_lr: m.lr,
        warmup_steps: m.warmup,
        label_smoothing: m.label_smoothing,
        seed,
        head_kind,
        task: m.task.into(),
        eval_every: m.eval_every,
        eval_batches: m.eval_batches,
    }
}

fn verify(a: &VerifyArgs, dir: &Path) -> Outcome {
    let seed = a.common.seed;
    let mut rows: Vec<CheckRow> = Vec::new();
    if matches!(a.suite, Suite::Properties | Suite::All) {
        rows.extend(suites::properties(seed)?);
    }
    if matches!(a.suite, Suite::Mc | Suite::All) {
        let (mc_rows, results) = suites::monte_carlo(seed, a.trials)?;
        rows.extend(mc_rows);
        let jsonl: String = results
            .iter()
            .map(|r| serde_json::to_string(r).expect("results serialize") + "\n")
            .collect();
        fs::write(dir.join("mc.jsonl"), jsonl)?;
    }
    if matches!(a.suite, Suite::Gradcheck | Suite::All) {
        rows.extend(suites::gradcheck(seed)?);
    }

    print!("{}", suites::render_table(&rows));
    let mut tsv = String::from("suite\tcheck\thead\tresult\tdetail\n");
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.suite,
            r.check,
            r.head.name(),
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        ));
    }
    fs::write(dir.join("verify.tsv"), tsv)?;

    let failed = rows.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", rows.len(), failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}

fn train(a: &TrainArgs, dir: &Path) -> Outcome {
    let config = train_config(&a.model, a.head.into(), a.common.seed);
    let report = train_with_progress(&config, |r| {
        eprintln!("step {:>6}  loss {:.4}  acc {:.4}", r.step, r.loss, r.accuracy);
    })?;
    fs::write(dir.join("metrics.jsonl"), report.metrics_jsonl())?;
    fs::write(dir.join("checkpoint.txt"), write_checkpoint(&report.model)?)?;
    println!("final accuracy {:.4}", report.final_accuracy());
    Ok(EXIT_OK)
}

fn load_matrix(path: &Path) -> Result<(EmbeddingMatrix, Option<Vocab>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let prefix = read_emb1_prefix(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok((prefix.matrix, prefix.vocab))
}

fn load_vector(v: &VectorArgs) -> Result<EmbVector, Failure> {
    let text = match (&v.h, &v.h_file) {
        (Some(s), None) => s.clone(),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        _ => return Err(Failure::usage("exactly one of --h or --h-file is required")),
    };
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Failure::usage(format!("bad vector entry {s:?}: {e}"))))
        .collect::<Result<Vec<f64>, Failure>>()?;
    Ok(EmbVector::new(values)?)
}

fn score_cmd(a: &ScoreArgs, dir: &Path) -> Outcome {
    let (w, vocab) = load_matrix(&a.matrix)?;
    let h = load_vector(&a.vector)?;
    let scores = score(&w, &h, a.head.into())?;
    let mut out = String::new();
    for (id, s) in top_k(&scores, a.topk) {
        match vocab.as_ref().and_then(|v| v.token(id)) {
            Some(tok) => out.push_str(&format!("{id}\t{s}\t{tok}\n")),
            None => out.push_str(&format!("{id}\t{s}\n")),
        }
    }
    print!("{out}");
    fs::write(dir.join("scores.tsv"), out)?;
    Ok(EXIT_OK)
}

fn recover(a: &RecoverArgs, dir: &Path) -> Outcome {
    let (w, _) = load_matrix(&a.matrix)?;
    let h = load_vector(&a.vector)?;
    let r = solve_l0_bruteforce(&w, &h, a.max_support)?;
    let alpha: serde_json::Map<String, Value> = r.alpha_hat.iter().map(|(i, v)| (i.to_string(), json!(v))).collect();
    let doc = json!({ "support": r.support, "alpha": alpha, "residual": r.residual });
    let text = serde_json::to_string_pretty(&doc).expect("recovery serializes") + "\n";
    print!("{text}");
    fs::write(dir.join("recovery.json"), text)?;
    Ok(EXIT_OK)
}

fn histogram(a: &HistogramArgs, dir: &Path) -> Outcome {
    let (w, _) = load_matrix(&a.matrix)?;
    let csv = histogram_csv(&norm_histogram(&w, a.bins)?);
    print!("{csv}");
    fs::write(dir.join("histogram.csv"), csv)?;
    Ok(EXIT_OK)
}

fn compare(a: &CompareArgs, dir: &Path) -> Outcome {
    if a.heads.is_empty() || a.seeds == 0 {
        return Err(Failure::usage("compare needs at least one head and one seed"));
    }
    let heads: Vec<HeadKind> = a.heads.iter().map(|&h| h.into()).collect();
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.common.seed + i).collect();
    let config = train_config(&a.model, HeadKind::Baseline, a.common.seed);
    let rows = compare_heads(&config, &heads, &seeds)?;
    for r in &rows {
        println!("{:<14} mean accuracy {:.4}", r.head_kind.name(), r.mean_accuracy);
    }
    let doc = json!({ "seeds": seeds, "rows": rows });
    fs::write(
        dir.join("comparison.json"),
        serde_json::to_string_pretty(&doc).expect("comparison serializes") + "\n",
    )?;
    Ok(EXIT_OK)
}
