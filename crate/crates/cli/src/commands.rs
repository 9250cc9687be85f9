use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clad_core::cost::{format_money, ThresholdRule};
use clad_core::data::{self, generate_synthetic, summarize, Dataset, LABEL_COLUMN};
use clad_core::evaluation::{cohen_kappa, compare_models, evaluate, rater_matrix, ConfusionMatrix, EvalReport};
use clad_core::model::{ModelFamily, TrainedModel};
use clad_core::pipeline::{fit, score, CostRecipe, ModelParams};
use clad_core::tuning::{grid_search, make_folds_with, select_best, GbdtGrid, MlpGrid, SearchSpace};
use clad_service::{Service, ServiceConfig};

use crate::config::RunConfig;
use crate::error::{io, CliError, CliResult};
use crate::{Cli, Command, CostFlags, ThresholdFlags};

pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_cost_flags(&mut config, &cli.cost);
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    config.cost.validate()?;
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Gen {
            n,
            seed,
            positive_ratio,
            out,
        } => {
            let mut syn = config.synthetic.clone();
            if let Some(n) = n {
                syn.n_records = n;
            }
            if let Some(s) = seed {
                syn.seed = s;
            }
            if let Some(r) = positive_ratio {
                syn.positive_ratio = r;
            }
            let ds = generate_synthetic(&syn)?;
            match out {
                Some(path) => {
                    ensure_parent(&path)?;
                    ds.save_csv(&path)?;
                    log::info!("wrote {} cases to {}", ds.len(), path.display());
                }
                None => write_stdout(ds.to_csv_string().as_bytes())?,
            }
            Ok(())
        }
        Command::Summarize { input, json } => {
            let ds = load(&input, true)?;
            let s = summarize(&ds)?;
            if json {
                println!("{}", to_json(&s)?);
            } else {
                println!("{s}");
            }
            Ok(())
        }
        Command::Ingest { input, unlabelled, out } => {
            let ds = load(&input, !unlabelled)?;
            println!("records          {}", ds.len());
            println!("fingerprint      {}", ds.fingerprint());
            if !unlabelled && !ds.is_empty() {
                println!("{}", summarize(&ds)?);
            }
            if let Some(path) = out {
                ensure_parent(&path)?;
                ds.save_csv(&path)?;
            }
            Ok(())
        }
        Command::Train {
            input,
            params,
            family,
            cost_blind,
            out,
        } => {
            let input = input.or(config.data.train.clone()).ok_or_else(|| missing("--input", "data.train"))?;
            let ds = load(&input, true)?;
            let params = match (params, family) {
                (Some(path), _) => read_json::<ModelParams>(&path)?,
                (None, Some(f)) => default_params(f.into()),
                (None, None) => config.model.clone().unwrap_or_else(|| default_params(ModelFamily::Gbdt)),
            };
            let recipe = if cost_blind { CostRecipe::cost_blind() } else { config.recipe };
            let model = fit(&ds, &params, &config.cost, &recipe)?;
            let out = out.unwrap_or_else(|| config.output_path("model.clad"));
            ensure_parent(&out)?;
            model.save(&out)?;
            println!("model        {}", out.display());
            println!("family       {}", model.family());
            println!("fingerprint  {}", model.fingerprint());
            println!("weighted     {}", model.training_costs.is_some());
            for (name, imp) in model.top_features(5) {
                println!("feature      {name:<30} {imp:.4}");
            }
            Ok(())
        }
        Command::Grid {
            input,
            k,
            fold_seed,
            no_stratify,
            family,
            full,
            out_dir,
            model_out,
        } => {
            let input = input.or(config.data.train.clone()).ok_or_else(|| missing("--input", "data.train"))?;
            let ds = load(&input, true)?;
            let space = match (family, full) {
                (Some(f), true) => full_space(f.into()),
                (Some(f), false) => default_space(f.into()),
                (None, true) => full_space(
                    config.search.as_ref().map_or(ModelFamily::Gbdt, SearchSpace::family),
                ),
                (None, false) => config.search.clone().unwrap_or_else(|| default_space(ModelFamily::Gbdt)),
            };
            let k = k.unwrap_or(config.folds.k);
            let seed = fold_seed.unwrap_or(config.folds.seed);
            let stratified = config.folds.stratified && !no_stratify;
            let plan = make_folds_with(&ds, k, seed, stratified)?;
            log::info!("searching {} combinations x {k} folds", space.size());
            let ranking = grid_search(&ds, &space, &config.cost, &config.recipe, &plan)?;
            let selection = select_best(&ranking)?;

            let dir = out_dir.or(config.output_dir.clone()).ok_or_else(|| missing("--out-dir", "output_dir"))?;
            fs::create_dir_all(&dir).map_err(io(&dir))?;
            write_file(&dir.join("sweep.txt"), selection.render_text().as_bytes())?;
            write_file(&dir.join("sweep.json"), to_json(&selection)?.as_bytes())?;
            write_file(&dir.join("best_params.json"), to_json(&selection.best)?.as_bytes())?;
            write_file(&dir.join("folds.json"), to_json(&plan)?.as_bytes())?;

            println!("trials               {} ({} failed)", selection.total_trials, selection.failed_trials);
            println!("cv_folds             {k}");
            println!("cv_mean_cost         {} BS", format_money(selection.best_mean_cost));
            println!("cv_mean_accuracy     {:.4}", selection.best_mean_accuracy);
            println!("best_params          {}", selection.best.canonical());
            if let Some(path) = model_out {
                let model = fit(&ds, &selection.best, &config.cost, &config.recipe)?;
                ensure_parent(&path)?;
                model.save(&path)?;
                let scored = score(&model, &ds.records, &config.cost, config.recipe.threshold)?;
                let report = evaluate("refit", &ds, &scored, &config.cost)?;
                println!("refit_model          {}", path.display());
                println!("refit_train_cost     {} BS", format_money(report.total_cost));
                println!("refit_train_accuracy {:.4}", report.accuracy);
            }
            Ok(())
        }
        Command::Score {
            model,
            input,
            threshold,
            out,
        } => {
            let m = load_model(&model)?;
            let ds = load(&input, has_label_column(&input)?)?;
            let scored = score(&m, &ds.records, &config.cost, rule(&threshold, &config))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::Internal(e.to_string());
            w.write_record(["record_id", "probability", "threshold", "decision", "c_fp", "c_fn"])
                .map_err(csv_err)?;
            for s in &scored {
                w.write_record([
                    s.record_id.clone(),
                    s.probability.to_string(),
                    s.threshold.to_string(),
                    u8::from(s.decision).to_string(),
                    format_money(s.costs.c_fp),
                    format_money(s.costs.c_fn),
                ])
                .map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
            match out {
                Some(path) => write_file(&path, &bytes),
                None => write_stdout(&bytes),
            }
        }
        Command::Eval {
            model,
            input,
            label,
            threshold,
            out,
        } => {
            let input = input.or(config.data.test.clone()).ok_or_else(|| missing("--input", "data.test"))?;
            let m = load_model(&model)?;
            let ds = load(&input, true)?;
            let scored = score(&m, &ds.records, &config.cost, rule(&threshold, &config))?;
            let label = label.unwrap_or_else(|| {
                model
                    .file_stem()
                    .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
            });
            let report = evaluate(&label, &ds, &scored, &config.cost)?;
            println!("{report}");
            if let Some(path) = out {
                write_file(&path, to_json(&report)?.as_bytes())?;
            }
            Ok(())
        }
        Command::Kappa {
            matrix,
            committee,
            model,
            json,
        } => {
            let cm = match (matrix, committee, model) {
                (Some(text), _, _) => text
                    .parse::<ConfusionMatrix>()
                    .map_err(|e| CliError::Usage(format!("--matrix: {e}")))?,
                (None, Some(c), Some(m)) => decision_matrix(&c, &m)?,
                _ => return Err(CliError::Usage("give --matrix or both --committee and --model".into())),
            };
            let report = cohen_kappa(&cm)?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                println!("{report}");
            }
            Ok(())
        }
        Command::Compare { a, b, json } => {
            let ra: EvalReport = read_json(&a)?;
            let rb: EvalReport = read_json(&b)?;
            let cmp = compare_models(&ra, &rb)?;
            if json {
                println!("{}", to_json(&cmp)?);
            } else {
                println!("{cmp}");
            }
            Ok(())
        }
        Command::Serve {
            cases,
            training,
            data_dir,
            addr,
            token,
            blind,
        } => {
            let cases = cases.or(config.data.cases.clone()).ok_or_else(|| missing("--cases", "data.cases"))?;
            let cases = load(&cases, has_label_column(&cases)?)?;
            let training = match training.or(config.data.train.clone()) {
                Some(p) => Some(load(&p, true)?),
                None => None,
            };
            let mut sc = ServiceConfig::new(data_dir.unwrap_or(config.serve.data_dir.clone()));
            sc.cost = config.cost;
            sc.token = token.or(config.serve.token.clone());
            sc.blind_default = blind || config.serve.blind_default;
            let addr: std::net::SocketAddr = addr
                .unwrap_or(config.serve.addr.clone())
                .parse()
                .map_err(|e| CliError::Usage(format!("--addr: {e}")))?;
            let service = Arc::new(Service::new(sc, cases, training)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            eprintln!("serving on http://{addr}");
            rt.block_on(clad_service::serve(service, addr))
                .map_err(|e| CliError::Internal(format!("server: {e}")))
        }
    }
}

fn apply_cost_flags(config: &mut RunConfig, flags: &CostFlags) {
    let c = &mut config.cost;
    if let Some(a) = flags.alpha {
        c.alpha = a;
    }
    if let Some(mr) = flags.mr {
        c.mr = mr;
    }
    if let Some(a) = flags.admin_cost {
        c.admin_cost = a;
    }
    if let Some(v) = flags.fp_variant {
        c.fp_variant = v.into();
    }
}

fn rule(flags: &ThresholdFlags, config: &RunConfig) -> ThresholdRule {
    flags.threshold.map_or(config.recipe.threshold, ThresholdRule::Fixed)
}

fn missing(flag: &str, key: &str) -> CliError {
    CliError::Usage(format!("{flag} is required (or set `{key}` in the config)"))
}

fn default_params(family: ModelFamily) -> ModelParams {
    match family {
        ModelFamily::Gbdt => ModelParams::Gbdt(Default::default()),
        ModelFamily::Mlp => ModelParams::Mlp(Default::default()),
    }
}

fn default_space(family: ModelFamily) -> SearchSpace {
    match family {
        ModelFamily::Gbdt => SearchSpace::Gbdt(GbdtGrid::default()),
        ModelFamily::Mlp => SearchSpace::Mlp(MlpGrid::default()),
    }
}

fn full_space(family: ModelFamily) -> SearchSpace {
    match family {
        ModelFamily::Gbdt => SearchSpace::Gbdt(GbdtGrid::full()),
        ModelFamily::Mlp => SearchSpace::Mlp(MlpGrid::full()),
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file", path.display())))
    }
}

fn has_label_column(path: &Path) -> CliResult<bool> {
    require_file(path)?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(headers.iter().any(|h| h == LABEL_COLUMN))
}

fn load(path: &Path, labelled: bool) -> CliResult<Dataset> {
    require_file(path)?;
    data::ingest(path, labelled).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<TrainedModel> {
    require_file(path)?;
    TrainedModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io(dir)),
        _ => Ok(()),
    }
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(io(path))
}

fn write_stdout(bytes: &[u8]) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Internal(format!("stdout: {e}")))
}

fn parse_decision(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "give" => Some(true),
        "0" | "false" | "no" | "deny" => Some(false),
        _ => None,
    }
}

/// Reads `record_id` plus a `decision` (or `committee_decision`) column.
fn read_decisions(path: &Path) -> CliResult<Vec<(String, bool)>> {
    require_file(path)?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let id = col(&["record_id"]).ok_or_else(|| bad("missing `record_id` column".into()))?;
    let dec = col(&["decision", "committee_decision"]).ok_or_else(|| bad("missing `decision` column".into()))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let raw = rec.get(dec).unwrap_or("");
        let d = parse_decision(raw).ok_or_else(|| bad(format!("row {}: `{raw}` is not a decision", row + 1)))?;
        out.push((rec.get(id).unwrap_or("").to_string(), d));
    }
    Ok(out)
}

/// Pairs the two files by record id, in committee order. The model file may
/// cover more cases than the committee decided.
fn decision_matrix(committee: &Path, model: &Path) -> CliResult<ConfusionMatrix> {
    let c = read_decisions(committee)?;
    let mut m = HashMap::new();
    for (id, d) in read_decisions(model)? {
        if m.insert(id.clone(), d).is_some() {
            return Err(CliError::Data(format!("{}: `{id}` appears twice", model.display())));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut committee_side = Vec::with_capacity(c.len());
    let mut model_side = Vec::with_capacity(c.len());
    for (id, d) in c {
        if !seen.insert(id.clone()) {
            return Err(CliError::Data(format!("{}: `{id}` appears twice", committee.display())));
        }
        let md = m
            .get(&id)
            .ok_or_else(|| CliError::Data(format!("{}: no decision for `{id}`", model.display())))?;
        committee_side.push(d);
        model_side.push(*md);
    }
    Ok(rater_matrix(&committee_side, &model_side)?)
}
