use std::path::{Path, PathBuf};

use adaptive_readout::builders::{
    bin_model, optimize_binning, three_state_model, DEFAULT_BINNING_CAP,
};
use adaptive_readout::eval::{
    exact_infidelity, histogram_infidelity, simulate, sweep, EvalOptions, Grid, SweepConfig,
    DEFAULT_EVAL_CAP,
};
use adaptive_readout::policy::{solve_optimal, SolveOptions, DEFAULT_SOLVE_CAP};
use adaptive_readout::pomdp::{to_cassandra_string, to_pomdp};
use adaptive_readout::{ActionSet, Error, ExpandedHmm, Policy};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::{
    parse_actions, parse_grid, parse_methods, parse_policy, parse_rate_model, read_payload,
    RunConfig,
};
use crate::output::{csv_with_config, envelope, write_atomic, write_json};

#[derive(Subcommand, Debug)]
pub enum BuildKind {
    /// The three-state toy model with leak probability `a` and flip probability `b`.
    ThreeState {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A fluorescence model integrated from a rate-model JSON file.
    Rates {
        /// Rate-model JSON file, or `be9` for the bundled synthetic model.
        #[arg(long, alias = "model")]
        input: String,
        /// Overrides the step duration of the input.
        #[arg(long)]
        dt_us: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        quad_points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn build(kind: BuildKind) -> anyhow::Result<()> {
    match kind {
        BuildKind::ThreeState { a, b, out } => {
            let mut cfg = RunConfig::new("build three-state");
            cfg.params = Some(json!({ "a": a, "b": b }));
            cfg.out = out.clone();
            let model = ExpandedHmm::trivial(three_state_model(a, b)?);
            write_json(out.as_deref(), &envelope(&cfg, vec![("model", serde_json::to_value(&model)?)]))
        }
        BuildKind::Rates {
            input,
            dt_us,
            n_max,
            quad_points,
            out,
        } => {
            let mut rm = parse_rate_model(&input)?;
            if let Some(dt) = dt_us {
                rm = rm.with_dt_us(dt);
            }
            if let Some(n) = n_max {
                rm.n_max = n;
            }
            if let Some(q) = quad_points {
                rm.quad_points = q;
            }
            rm.validate()?;
            let mut cfg = RunConfig::new("build rates");
            cfg.model = Some(input);
            cfg.params = Some(json!({ "dt_us": rm.dt_us, "n_max": rm.n_max, "quad_points": rm.quad_points }));
            cfg.out = out.clone();
            let model = rm.build()?;
            write_json(
                out.as_deref(),
                &envelope(
                    &cfg,
                    vec![("rate_model", serde_json::to_value(&rm)?), ("model", serde_json::to_value(&model)?)],
                ),
            )
        }
    }
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().map_or_else(String::new, |p| p.get_name().to_string())
}

fn load_model(path: &Path) -> anyhow::Result<ExpandedHmm> {
    read_payload(path, "model")
}

#[derive(Args, Debug)]
pub struct BinsArgs {
    /// Unbinned model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bins: usize,
    #[arg(long)]
    steps: usize,
    /// Policy scored during the search.
    #[arg(long, default_value = "no-perms")]
    policy: String,
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long, default_value = "transpositions")]
    actions: String,
    #[arg(long, default_value_t = DEFAULT_BINNING_CAP)]
    work_cap: f64,
    /// Best partition and its infidelity (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Every candidate with its infidelity.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// The model binned with the best partition.
    #[arg(long)]
    binned_model: Option<PathBuf>,
}

#[derive(Serialize)]
struct CandidateRow {
    boundaries: String,
    infidelity: f64,
}

pub fn bins(args: BinsArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let actions = parse_actions(&args.actions, model.num_physical())?;
    let policy = parse_policy(&args.policy, args.lookahead)?;
    let mut cfg = RunConfig::new("bins");
    cfg.model = Some(args.model.display().to_string());
    cfg.bins = Some(args.bins);
    cfg.steps = Some(args.steps);
    cfg.policy = Some(args.policy.clone());
    cfg.lookahead = args.lookahead;
    cfg.actions = Some(actions.clone());
    cfg.work_cap = Some(args.work_cap);
    cfg.out = args.out.clone();
    cfg.validate()?;

    let search = optimize_binning(&model, args.bins, args.steps, &policy, &actions, args.work_cap)?;
    if let Some(path) = &args.csv {
        let rows: Vec<CandidateRow> = search
            .candidates
            .iter()
            .map(|(p, v)| CandidateRow {
                boundaries: p.boundaries().iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                infidelity: *v,
            })
            .collect();
        write_atomic(Some(path), &csv_with_config(&cfg, &rows)?)?;
    }
    if let Some(path) = &args.binned_model {
        let binned = bin_model(&model, &search.best)?;
        write_json(Some(path), &envelope(&cfg, vec![("model", serde_json::to_value(&binned)?)]))?;
    }
    write_json(
        args.out.as_deref(),
        &envelope(
            &cfg,
            vec![
                ("partition", serde_json::to_value(&search.best)?),
                ("infidelity", json!(search.infidelity)),
                ("candidates", json!(search.candidates.len())),
            ],
        ),
    )
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolveMethod {
    Exhaustive,
    MinEntropy,
    None,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "transpositions")]
    actions: String,
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    method: SolveMethod,
    #[arg(long, default_value_t = 2)]
    lookahead: usize,
    #[arg(long, default_value_t = DEFAULT_SOLVE_CAP)]
    work_cap: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn solve(args: SolveArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let actions = parse_actions(&args.actions, model.num_physical())?;
    let mut cfg = RunConfig::new("solve");
    cfg.model = Some(args.model.display().to_string());
    cfg.steps = Some(args.steps);
    cfg.actions = Some(actions.clone());
    cfg.method = Some(value_name(args.method));
    cfg.work_cap = Some(args.work_cap);
    cfg.out = args.out.clone();
    if matches!(args.method, SolveMethod::MinEntropy) {
        cfg.lookahead = Some(args.lookahead);
    }
    cfg.validate()?;

    let (policy, fidelity) = match args.method {
        SolveMethod::Exhaustive => {
            let opts = SolveOptions {
                work_cap: args.work_cap,
                parallel: true,
            };
            let sol = solve_optimal(&model, &actions, args.steps, &opts)?;
            (Policy::Lookup(sol.policy), Some(sol.fidelity))
        }
        SolveMethod::MinEntropy => (
            Policy::MinEntropy {
                lookahead: args.lookahead,
            },
            None,
        ),
        SolveMethod::None => (Policy::NoPerms, None),
    };
    policy.check(args.steps, &actions)?;
    let mut entries = vec![("policy", serde_json::to_value(&policy)?)];
    if let Some(f) = fidelity {
        entries.push(("fidelity", json!(f)));
    }
    write_json(args.out.as_deref(), &envelope(&cfg, entries))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EvalKind {
    Exact,
    Mc,
    Histogram,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Policy file written by `solve`, `no-perms` or `min-entropy[:g]`.
    #[arg(long, default_value = "no-perms")]
    policy: String,
    #[arg(long)]
    lookahead: Option<usize>,
    /// Defaults to the action set stored in a lookup policy, else transpositions.
    #[arg(long)]
    actions: Option<String>,
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value = "exact")]
    method: EvalKind,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EVAL_CAP)]
    work_cap: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let policy = parse_policy(&args.policy, args.lookahead)?;
    let actions = match (&args.actions, &policy) {
        (Some(arg), _) => parse_actions(arg, model.num_physical())?,
        (None, Policy::Lookup(t)) => t.actions().clone(),
        (None, _) => ActionSet::transpositions(model.num_physical()),
    };
    let mut cfg = RunConfig::new("eval");
    cfg.model = Some(args.model.display().to_string());
    cfg.policy = Some(args.policy.clone());
    cfg.lookahead = args.lookahead;
    cfg.actions = Some(actions.clone());
    cfg.steps = Some(args.steps);
    cfg.method = Some(value_name(args.method));
    cfg.work_cap = Some(args.work_cap);
    cfg.out = args.out.clone();
    if matches!(args.method, EvalKind::Mc) {
        cfg.trials = Some(args.trials);
        cfg.seed = Some(args.seed);
    }
    cfg.validate()?;

    let report = match args.method {
        EvalKind::Exact => {
            let opts = EvalOptions {
                work_cap: args.work_cap,
                parallel: true,
            };
            exact_infidelity(&model, &policy, &actions, args.steps, &opts)?
        }
        EvalKind::Mc => simulate(&model, &policy, &actions, args.steps, args.trials, args.seed)?,
        EvalKind::Histogram => histogram_infidelity(&model, args.steps)?,
    };
    write_json(args.out.as_deref(), &envelope(&cfg, vec![("report", serde_json::to_value(&report)?)]))
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// `dt:...`, `ab:...` or a grid JSON file.
    #[arg(long)]
    grid: String,
    /// Rate-model file or `be9`; required for `dt` grids.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    bins: Option<usize>,
    /// Comma-separated; defaults depend on the grid kind.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long)]
    actions: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SOLVE_CAP)]
    work_cap: f64,
    /// Directory receiving the model evaluated at each grid point.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn sweep_cmd(args: SweepArgs) -> anyhow::Result<()> {
    let grid = parse_grid(&args.grid)?;
    let rate_model = match (&grid, &args.model) {
        (Grid::Dt { .. }, Some(arg)) => Some(parse_rate_model(arg)?),
        (Grid::Dt { .. }, None) => {
            return Err(Error::InvalidParameter("a dt grid needs --model".into()).into())
        }
        (Grid::ThreeState { .. }, _) => None,
    };
    let num_physical = rate_model.as_ref().map_or(3, |rm| rm.num_levels());
    let actions = args
        .actions
        .as_deref()
        .map(|arg| parse_actions(arg, num_physical))
        .transpose()?;
    let default_methods = match grid {
        Grid::Dt { .. } => "histogram,no-perms,min-entropy,exhaustive",
        Grid::ThreeState { .. } => "no-perms,min-entropy,exhaustive",
    };
    let methods = parse_methods(args.methods.as_deref().unwrap_or(default_methods), args.lookahead)?;

    let mut cfg = RunConfig::new("sweep");
    cfg.model = args.model.clone();
    cfg.grid = Some(grid.clone());
    cfg.steps = Some(args.steps);
    cfg.bins = args.bins;
    cfg.lookahead = args.lookahead;
    cfg.methods = methods.iter().map(ToString::to_string).collect();
    cfg.actions = Some(
        actions
            .clone()
            .unwrap_or_else(|| ActionSet::transpositions(num_physical)),
    );
    cfg.work_cap = Some(args.work_cap);
    cfg.out = args.out.clone();
    cfg.validate()?;

    let points = sweep(&SweepConfig {
        grid,
        rate_model,
        actions,
        methods,
        n: args.steps,
        bins: args.bins,
        work_cap: args.work_cap,
    })?;
    if let Some(dir) = &args.cache {
        for (i, p) in points.iter().enumerate() {
            let doc = envelope(
                &cfg,
                vec![
                    ("grid_value", json!(p.grid_value)),
                    ("partition", serde_json::to_value(&p.partition)?),
                    ("model", serde_json::to_value(&p.model)?),
                ],
            );
            write_json(Some(&dir.join(format!("point_{i:03}.json"))), &doc)?;
        }
    }
    let rows: Vec<_> = points.into_iter().flat_map(|p| p.rows).collect();
    write_atomic(args.out.as_deref(), &csv_with_config(&cfg, &rows)?)
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "transpositions")]
    actions: String,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn export_pomdp(args: ExportArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let actions = parse_actions(&args.actions, model.num_physical())?;
    let mut cfg = RunConfig::new("export-pomdp");
    cfg.model = Some(args.model.display().to_string());
    cfg.actions = Some(actions.clone());
    cfg.steps = Some(args.steps);
    cfg.out = args.out.clone();
    cfg.validate()?;
    let pomdp = to_pomdp(&model, &actions, args.steps)?;
    let text = format!(
        "# run-config: {}\n{}",
        serde_json::to_string(&cfg.to_json())?,
        to_cassandra_string(&pomdp)
    );
    write_atomic(args.out.as_deref(), text.as_bytes())
}
