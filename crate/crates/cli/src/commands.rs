use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use seedplan::analytic::{
    c_opt_general, eta_fanout_homogeneous_set, eta_fanout_single, eta_overhead_exact, eta_perfect_set,
};
use seedplan::builders::{
    build_dichotomic, build_homogeneous_trees, build_monorate, build_perfect_broadcast, default_k_max,
    homogeneous_slot_count, perfect_slot_count, BuildError, DichotomicOptions,
};
use seedplan::dimensioning::{required_bandwidth, sweep, DimensioningError, Generator, ScalabilityQuery, SweepSpec};
use seedplan::oracle::{oracle_optimal, OracleError};
use seedplan::{
    measure_efficiency, validate_scheme, DiffusionScheme, Model, ModelError, NodeId, Population, Scenario, SeederSpec,
    StreamParams,
};

use crate::args::{
    BuilderArg, DimensionArgs, EfficiencyArgs, ModelArg, OracleArgs, OverheadArg, ScenarioArgs, SchemeArgs, SweepArgs,
    ValidateArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Dimensioning(#[from] DimensioningError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

pub type Outcome = Result<i32, CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n";
    match out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read(path)?).map_err(|source| CliError::Parse { path: path.to_owned(), source })
}

struct Loaded {
    params: StreamParams,
    pop: Population,
    subset: Vec<u32>,
}

fn load(args: &ScenarioArgs) -> Result<Loaded, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let params = match args.overhead {
        Some(preset) => preset.into(),
        None => scenario.params()?,
    };
    let pop = scenario.population()?;
    let subset = match &args.subset {
        Some(ids) => parse_subset(ids, pop.n_seeders())?,
        None => pop.all_seeders(),
    };
    Ok(Loaded { params, pop, subset })
}

/// `0,2`, `S0,S2` or empty for no seeders.
pub fn parse_subset(ids: &str, n_seeders: u32) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    for part in ids.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let digits = part.strip_prefix('S').or_else(|| part.strip_prefix('s')).unwrap_or(part);
        let id: u32 = digits.parse().map_err(|_| CliError::Usage(format!("bad seeder id {part:?} in --subset")))?;
        if id >= n_seeders {
            return Err(CliError::Usage(format!("--subset names S{id} but the scenario has {n_seeders} seeders")));
        }
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// `LO:HI:STEP`.
pub fn parse_range(text: &str, flag: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Usage(format!("{flag} expects LO:HI:STEP, got {text:?}"));
    let [lo, hi, step] = parts.as_slice() else {
        return Err(bad());
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if !lo.is_finite() || !hi.is_finite() || !step.is_finite() || step <= 0.0 {
        return Err(CliError::Usage(format!("{flag}: bounds must be finite and STEP positive")));
    }
    Ok((lo, hi, step))
}

fn stream_params(scenario: Option<&Path>, overhead: Option<OverheadArg>) -> Result<StreamParams, CliError> {
    match (overhead, scenario) {
        (Some(preset), _) => Ok(preset.into()),
        (None, Some(path)) => Ok(load_scenario(path)?.params()?),
        (None, None) => Ok(StreamParams::small_overhead()),
    }
}

fn node_list(subset: &[u32]) -> Vec<String> {
    subset.iter().map(|&s| NodeId::Seeder(s).to_string()).collect()
}

pub fn efficiency(args: &EfficiencyArgs) -> Outcome {
    let Loaded { params, pop, subset } = load(&args.scenario)?;
    let want = |m: ModelArg| args.model.is_none_or(|chosen| chosen == m);
    let n_l = u64::from(pop.n_leechers);
    let r = params.r;

    let mut seeders = Vec::new();
    for (i, spec) in pop.seeders.iter().enumerate() {
        let u = spec.upload;
        let mut entry = Map::new();
        entry.insert("seeder".into(), json!(NodeId::Seeder(i as u32).to_string()));
        entry.insert("upload".into(), json!(u));
        entry.insert("fanout_cap".into(), json!(spec.fanout_cap));
        if want(ModelArg::Perfect) {
            entry.insert("perfect".into(), if u > 0.0 { json!(eta_perfect_set(n_l, u, r)) } else { Value::Null });
        }
        if want(ModelArg::Fanout) {
            let c = spec.fanout_cap.map_or(n_l, u64::from);
            entry.insert("fanout".into(), if u > 0.0 { json!(eta_fanout_single(u, c, r)) } else { Value::Null });
        }
        if want(ModelArg::Overhead) {
            let mut o = if u > 0.0 { to_json(&eta_overhead_exact(&params, u, n_l)) } else { Value::Null };
            if params.has_receiver_overhead() && u > 0.0 {
                o["c_opt_general"] = c_opt_general(&params, u).map_or(Value::Null, |c| json!(c));
            }
            entry.insert("overhead".into(), o);
        }
        seeders.push(Value::Object(entry));
    }

    let total = pop.total_upload(&subset);
    let mut set = Map::new();
    set.insert("subset".into(), json!(node_list(&subset)));
    set.insert("total_upload".into(), json!(total));
    if total > 0.0 {
        if want(ModelArg::Perfect) {
            set.insert("perfect".into(), json!(eta_perfect_set(n_l, total, r)));
        }
        if want(ModelArg::Fanout) {
            let members: Option<Vec<(f64, u64)>> = subset
                .iter()
                .map(|&s| pop.seeders[s as usize].fanout_cap.map(|c| (pop.upload(s), u64::from(c))))
                .collect();
            let fanout = match members {
                None => json!({"error": "every member needs a fanout cap"}),
                Some(m) => match eta_fanout_homogeneous_set(&m, n_l, r) {
                    Ok(h) => to_json(&h),
                    Err(e) => json!({"error": e.to_string()}),
                },
            };
            set.insert("fanout".into(), fanout);
        }
        if want(ModelArg::Overhead) {
            let weighted: f64 = subset
                .iter()
                .map(|&s| pop.upload(s))
                .filter(|&u| u > 0.0)
                .map(|u| u * eta_overhead_exact(&params, u, n_l).eta)
                .sum::<f64>()
                / total;
            set.insert("overhead".into(), json!({"eta": weighted, "aggregation": "neglected"}));
        }
    }
    let report = json!({
        "stream": params,
        "n_leechers": pop.n_leechers,
        "server_capacity": pop.server_capacity,
        "eta_max": params.eta_max(),
        "seeders": seeders,
        "set": set,
    });
    emit(&report, args.out.as_deref())?;
    Ok(0)
}

pub fn scheme(args: &SchemeArgs) -> Outcome {
    let Loaded { params, pop, subset } = load(&args.scenario)?;
    let model: Model = args.model.into();
    let builder = args.builder.unwrap_or(match args.model {
        ModelArg::Perfect => BuilderArg::Perfect,
        ModelArg::Fanout => BuilderArg::Homogeneous,
        ModelArg::Overhead => BuilderArg::Dichotomic,
    });
    let need_slots = |what: &str| CliError::Usage(format!("no exact slot count for {what}; pass --slots"));
    let (plan, built) = match builder {
        BuilderArg::Perfect => {
            let k = match args.slots {
                Some(k) => k,
                None => perfect_slot_count(&params, &pop, &subset).ok_or_else(|| need_slots("these shares"))?,
            };
            let s = build_perfect_broadcast(&params, &pop, &subset, k)?;
            (json!({"builder": "perfect", "slot_count": k}), s)
        }
        BuilderArg::Homogeneous => {
            let k = match args.slots {
                Some(k) => k,
                None => homogeneous_slot_count(&params, &pop, &subset).ok_or_else(|| need_slots("this rate"))?,
            };
            let (plan, s) = build_homogeneous_trees(&params, &pop, &subset, k)?;
            (json!({"builder": "homogeneous", "plan": plan}), s)
        }
        BuilderArg::Monorate => {
            let (plan, s) = build_monorate(&params, &pop, &subset, args.slots.unwrap_or(1000))?;
            (json!({"builder": "monorate", "plan": plan}), s)
        }
        BuilderArg::Dichotomic => {
            let k_max = args.kmax.or_else(|| default_k_max(&params));
            let k = match args.slots {
                Some(k) => k,
                None => 1024u32.max(1 << k_max.unwrap_or(0).min(20)),
            };
            let options = DichotomicOptions { k_max, ..Default::default() };
            let (plan, s) = build_dichotomic(&params, &pop, &subset, k, &options)?;
            (json!({"builder": "dichotomic", "plan": plan}), s)
        }
    };
    let report = validate_scheme(&params, &pop, &built, model)?;
    let measured = measure_efficiency(&params, &pop, &built, &subset)?;
    let mut plan = plan;
    plan["model"] = to_json(&model);
    plan["measured"] = json!({
        "set_efficiency": measured.set_efficiency,
        "set_efficiency_exact": measured.set_efficiency_exact,
        "per_seeder": measured.per_seeder,
    });
    plan["valid"] = json!(report.is_valid());
    match &args.out {
        Some(path) => {
            write(path, &(built.to_json() + "\n"))?;
            emit(&plan, Some(&with_suffix(path, ".plan.json")))?;
            println!(
                "wrote {} ({} slots, set efficiency {})",
                path.display(),
                built.slot_count(),
                measured.set_efficiency
            );
        }
        None => emit(&json!({"plan": plan, "scheme": built}), None)?,
    }
    Ok(if report.is_valid() { 0 } else { 1 })
}

/// A population that holds every node the scheme names, with budgets no
/// scheme can exceed.
fn permissive_population(scheme: &DiffusionScheme) -> Result<Population, ModelError> {
    let mut n_l = 1;
    let mut n_s = 0;
    for (from, to, _) in scheme.edges() {
        for n in [from, to] {
            match n {
                NodeId::Leecher(i) => n_l = n_l.max(i + 1),
                NodeId::Seeder(i) => n_s = n_s.max(i + 1),
                NodeId::Server => {}
            }
        }
    }
    Population::new(f64::MAX, n_l, vec![SeederSpec::new(f64::MAX); n_s as usize])
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    let text = read(&args.scheme)?;
    let built =
        DiffusionScheme::from_json(&text).map_err(|source| CliError::Parse { path: args.scheme.clone(), source })?;
    let (params, pop, checks) = match &args.scenario {
        Some(path) => {
            let scenario = load_scenario(path)?;
            let params = match args.overhead {
                Some(preset) => preset.into(),
                None => scenario.params()?,
            };
            (params, scenario.population()?, "all")
        }
        None => (stream_params(None, args.overhead)?, permissive_population(&built)?, "flow"),
    };
    let model: Model = args.model.into();
    let report = validate_scheme(&params, &pop, &built, model)?;
    let value = json!({
        "scheme": args.scheme.display().to_string(),
        "checks": checks,
        "valid": report.is_valid(),
        "model": model,
        "violations": report.violations,
    });
    emit(&value, args.out.as_deref())?;
    Ok(if report.is_valid() { 0 } else { 1 })
}

pub fn oracle(args: &OracleArgs) -> Outcome {
    let Loaded { params, pop, subset } = load(&args.scenario)?;
    let model: Model = args.model.into();
    let result = oracle_optimal(&params, &pop, &subset, model, args.slots)?;
    let report = json!({
        "model": model,
        "subset": node_list(&subset),
        "slot_count": result.slot_count,
        "best_efficiency": result.best_efficiency,
        "best_efficiency_f64": result.best_efficiency.to_f64(),
        "search_nodes": result.search_nodes,
        "patterns": result.patterns,
        "witness": result.witness,
    });
    if let Some(path) = &args.out {
        write(&with_suffix(path, ".scheme.json"), &(result.witness.to_json() + "\n"))?;
    }
    emit(&report, args.out.as_deref())?;
    Ok(0)
}

pub fn dimension(args: &DimensionArgs) -> Outcome {
    let params = stream_params(args.scenario.as_deref(), args.overhead)?;
    let betas: Vec<f64> = match &args.beta_range {
        Some(text) => {
            let (lo, hi, step) = parse_range(text, "--beta-range")?;
            let n = if hi < lo { 0 } else { ((hi - lo) / step + 1e-9).floor() as usize + 1 };
            (0..n).map(|i| lo + i as f64 * step).collect()
        }
        None => vec![args.beta],
    };
    let mut rows = Vec::new();
    for beta in betas {
        let query =
            ScalabilityQuery { params, beta, eta_leecher: args.eta_leecher, n_leechers: args.leechers, cap: args.cap };
        rows.push(json!({"beta": beta, "u_required": required_bandwidth(&query)?}));
    }
    let report = json!({
        "stream": params,
        "eta_leecher": args.eta_leecher.unwrap_or(params.eta_max()),
        "aggregation": "neglected",
        "results": rows,
    });
    emit(&report, args.out.as_deref())?;
    Ok(0)
}

pub fn sweep_cmd(args: &SweepArgs) -> Outcome {
    let generator: Generator = args.generator.parse().map_err(|e: DimensioningError| CliError::Usage(e.to_string()))?;
    let params = stream_params(args.scenario.as_deref(), args.overhead)?;
    let (lo, hi, step) = if generator == Generator::UVsBeta {
        let text = args.beta_range.as_deref().or(args.range.as_deref());
        text.map_or(Ok((0.0, 4.0, 0.05)), |t| parse_range(t, "--beta-range"))?
    } else {
        match &args.range {
            Some(t) => parse_range(t, "--range")?,
            None => (2.0 * params.b + 0.1, 2000.0, 0.1),
        }
    };
    let spec = SweepSpec { generator, params, lo, hi, step, n_leechers: args.leechers, k_max: args.kmax };
    let table = sweep(&spec)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            table.write_csv(file)?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(0)
}
