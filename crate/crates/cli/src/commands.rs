use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use motifwatch::analysis::{
    analyze_motifs, bars_from, event_inputs, impact_inputs, motif_edge_rows, replay_streams,
    score_labels, MotifFileReport,
};
use motifwatch::events::{event_study, EventStudyConfig, SideFilter};
use motifwatch::impact::impact_study;
use motifwatch::io::{read_json, read_records, write_json, write_jsonl, write_records, Format};
use motifwatch::powerlaw::{fit_discrete_powerlaw, fit_with_p_value, PowerLawFit, TailForm};
use motifwatch::synth::{generate, random_plan, InjectionPlan, Label, MarketConfig};
use motifwatch::tape::{parse_order_tape, write_order_tape, Quote, Session, Trade};
use motifwatch::Error;

use crate::manifest::{Recorder, RunManifest, MANIFEST_FILE};
use crate::{Cli, CliError, Command, GlobalArgs, MotifSample, StudyArgs, SynthArgs};

type CliResult<T> = std::result::Result<T, CliError>;

/// Output locations shared by every command of one invocation.
struct Ctx<'a> {
    global: &'a GlobalArgs,
    /// Input paths under this directory are recorded relative to it.
    root: PathBuf,
}

impl Ctx<'_> {
    fn recorder(&self, command: &str, dir: &Path) -> CliResult<Recorder> {
        Ok(Recorder::new(command, dir, &self.root)?)
    }

    fn records_name(&self, stem: &str) -> String {
        format!("{stem}.{}", self.global.format.extension())
    }
}

pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let ctx = Ctx {
        global: &cli.global,
        root: cli.global.out.clone(),
    };
    let out = cli.global.out.as_path();
    match &cli.command {
        Command::Synth(args) => synth(&ctx, args, out),
        Command::Replay { tape, session } => replay(&ctx, tape, session.session(), out),
        Command::Motifs { trades } => motifs(&ctx, trades, out),
        Command::Eventstudy {
            trades,
            quotes,
            motifs,
            study,
            session,
        } => eventstudy(&ctx, trades, quotes, motifs, study, session.session(), out),
        Command::Impact {
            trades,
            motifs,
            side,
        } => impact(&ctx, trades, motifs, *side, out),
        Command::Fit {
            sample,
            sample_of,
            form,
            bootstrap,
        } => fit(&ctx, sample, *sample_of, *form, *bootstrap, out),
        Command::Pipeline {
            config,
            plan,
            injections,
            tape,
            study,
            session,
        } => {
            let source = match (config, tape) {
                (Some(config), _) => Source::Synth(SynthArgs {
                    config: config.clone(),
                    plan: plan.clone(),
                    injections: *injections,
                }),
                (None, Some(tape)) => Source::Tape(tape.clone(), session.session()),
                (None, None) => {
                    return Err(CliError::Usage("pipeline needs --config or --tape".into()))
                }
            };
            pipeline(&ctx, source, study, out)
        }
    }
}

fn synth(ctx: &Ctx, args: &SynthArgs, out: &Path) -> CliResult<RunManifest> {
    let mut rec = ctx.recorder("synth", out)?;
    let mut config: MarketConfig = read_json(&args.config)?;
    rec.input(&args.config)?;
    if let Some(seed) = ctx.global.seed {
        config.seed = seed;
    }
    config.validate()?;
    let plan = match (&args.plan, args.injections) {
        (Some(path), _) => {
            rec.input(path)?;
            read_json(path)?
        }
        (None, Some(n)) => random_plan(&config, n, config.seed),
        (None, None) => InjectionPlan::default(),
    };
    rec.seed(config.seed);
    rec.param("config", &config);
    rec.param("injections", args.injections);
    rec.param("format", ctx.global.format);
    let output = generate(&config, &plan)?;
    let tape = ctx.records_name("tape");
    write_order_tape(&rec.path(&tape), &output.tape, ctx.global.format)?;
    rec.output(&tape)?;
    write_json(&rec.path("plan.json"), &plan)?;
    rec.output("plan.json")?;
    write_jsonl(&rec.path("labels.jsonl"), &output.labels)?;
    rec.output("labels.jsonl")?;
    write_jsonl(&rec.path("voided.jsonl"), &output.voided)?;
    rec.output("voided.jsonl")?;
    if !output.voided.is_empty() {
        let injections: std::collections::BTreeSet<_> = output
            .voided
            .iter()
            .map(|v| (&v.label.stock, v.label.injection))
            .collect();
        rec.note(format!("{} injections voided", injections.len()));
    }
    Ok(rec.finish()?)
}

/// One line of the replay diagnostics file: a rejected tape row or a replay anomaly.
#[derive(Serialize)]
struct DiagnosticRecord {
    source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stock: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    day: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_ms: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_ref: Option<u64>,
    kind: String,
    message: String,
}

fn replay(ctx: &Ctx, tape: &Path, session: Session, out: &Path) -> CliResult<RunManifest> {
    let mut rec = ctx.recorder("replay", out)?;
    let parsed = parse_order_tape(tape, Format::from_path(tape))?;
    rec.input(tape)?;
    rec.param("session", session);
    rec.param("format", ctx.global.format);
    let result = replay_streams(&parsed.streams, session);
    let mut diagnostics: Vec<DiagnosticRecord> = parsed
        .diagnostics
        .iter()
        .map(|d| DiagnosticRecord {
            source: "tape",
            line: Some(d.line),
            stock: None,
            day: None,
            timestamp_ms: None,
            order_ref: None,
            kind: serde_json::to_value(d.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            message: d.message.clone(),
        })
        .collect();
    diagnostics.extend(result.diagnostics.iter().map(|(key, d)| DiagnosticRecord {
        source: "replay",
        line: None,
        stock: Some(key.stock.clone()),
        day: Some(key.day.to_string()),
        timestamp_ms: Some(d.timestamp_ms),
        order_ref: Some(d.order_ref),
        kind: "replay".into(),
        message: d.message.clone(),
    }));
    if !diagnostics.is_empty() {
        rec.note(format!("{} diagnostics", diagnostics.len()));
    }
    let format = ctx.global.format;
    let trades = ctx.records_name("trades");
    write_records(&rec.path(&trades), &result.trades, format)?;
    rec.output(&trades)?;
    let quotes = ctx.records_name("quotes");
    write_records(&rec.path(&quotes), &result.quotes, format)?;
    rec.output(&quotes)?;
    let bars = ctx.records_name("bars");
    write_records(&rec.path(&bars), &result.bars, format)?;
    rec.output(&bars)?;
    write_jsonl(&rec.path("diagnostics.jsonl"), &diagnostics)?;
    rec.output("diagnostics.jsonl")?;
    Ok(rec.finish()?)
}

fn read_trades(path: &Path) -> CliResult<Vec<Trade>> {
    Ok(read_records(path, Format::from_path(path))?)
}

fn motifs(ctx: &Ctx, trades_path: &Path, out: &Path) -> CliResult<RunManifest> {
    let mut rec = ctx.recorder("motifs", out)?;
    let trades = read_trades(trades_path)?;
    rec.input(trades_path)?;
    rec.param("format", ctx.global.format);
    let report = analyze_motifs(&trades);
    write_json(&rec.path("motifs.json"), &report)?;
    rec.output("motifs.json")?;
    let edges = ctx.records_name("motif_edges");
    write_records(
        &rec.path(&edges),
        &motif_edge_rows(&trades, &report),
        ctx.global.format,
    )?;
    rec.output(&edges)?;
    Ok(rec.finish()?)
}

fn study_config(study: &StudyArgs) -> CliResult<EventStudyConfig> {
    if study.group_size == 0 {
        return Err(CliError::Usage("--group-size must be positive".into()));
    }
    if study.variables.is_empty() {
        return Err(CliError::Usage(
            "--variables must name at least one variable".into(),
        ));
    }
    let mut variables = study.variables.clone();
    variables.sort();
    variables.dedup();
    Ok(EventStudyConfig {
        variables,
        group_size: study.group_size,
        fit_range: study.fit_range,
        side: study.side,
    })
}

fn eventstudy(
    ctx: &Ctx,
    trades_path: &Path,
    quotes_path: &Path,
    motifs_path: &Path,
    study: &StudyArgs,
    session: Session,
    out: &Path,
) -> CliResult<RunManifest> {
    let config = study_config(study)?;
    let mut rec = ctx.recorder("eventstudy", out)?;
    let trades = read_trades(trades_path)?;
    let quotes: Vec<Quote> = read_records(quotes_path, Format::from_path(quotes_path))?;
    let report: MotifFileReport = read_json(motifs_path)?;
    for p in [trades_path, quotes_path, motifs_path] {
        rec.input(p)?;
    }
    rec.param("study", &config);
    rec.param("session", session);
    rec.param("format", ctx.global.format);
    let bars = bars_from(&trades, &quotes, session);
    let inputs = event_inputs(&bars, &trades, &report, session);
    let result = event_study(&inputs, &config)?;
    for g in &result.groups {
        if let Some(note) = &g.note {
            rec.note(format!("{} {}: {note}", g.group, g.variable.name()));
        }
    }
    write_json(&rec.path("eventstudy.json"), &result)?;
    rec.output("eventstudy.json")?;
    let name = ctx.records_name("trajectories");
    write_records(
        &rec.path(&name),
        &result.trajectory_rows(),
        ctx.global.format,
    )?;
    rec.output(&name)?;
    Ok(rec.finish()?)
}

fn impact(
    ctx: &Ctx,
    trades_path: &Path,
    motifs_path: &Path,
    side: SideFilter,
    out: &Path,
) -> CliResult<RunManifest> {
    let mut rec = ctx.recorder("impact", out)?;
    let trades = read_trades(trades_path)?;
    let report: MotifFileReport = read_json(motifs_path)?;
    rec.input(trades_path)?;
    rec.input(motifs_path)?;
    rec.param("side", side);
    rec.param("format", ctx.global.format);
    let result = impact_study(&impact_inputs(&trades, &report), side);
    for s in &result.sides {
        if let Some(note) = &s.note {
            rec.note(format!("{}: {note}", s.side));
        }
    }
    write_json(&rec.path("impact.json"), &result)?;
    rec.output("impact.json")?;
    let name = ctx.records_name("impact_lags");
    write_records(&rec.path(&name), &result.rows(), ctx.global.format)?;
    rec.output(&name)?;
    Ok(rec.finish()?)
}

fn read_sample(path: &Path, of: Option<MotifSample>) -> CliResult<Vec<u64>> {
    if let Some(which) = of {
        let report: MotifFileReport = read_json(path)?;
        return Ok(report
            .stocks
            .iter()
            .flat_map(|s| -> Vec<u64> {
                match which {
                    MotifSample::CEdges => s.c_edge_counts.clone(),
                    MotifSample::ClustersA => s.clusters.a.iter().map(|&n| n as u64).collect(),
                    MotifSample::ClustersB => s.clusters.b.iter().map(|&n| n as u64).collect(),
                    MotifSample::ClustersC => s.clusters.c.iter().map(|&n| n as u64).collect(),
                }
            })
            .collect());
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text).map_err(Error::from)?);
    }
    let mut sample = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for token in line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let value = token.parse().map_err(|_| Error::Row {
                line: i as u64 + 1,
                message: format!("{token:?} is not a non-negative integer"),
            })?;
            sample.push(value);
        }
    }
    Ok(sample)
}

fn fit_sample(
    sample: &[u64],
    form: TailForm,
    bootstrap: usize,
    seed: u64,
) -> motifwatch::Result<PowerLawFit> {
    let fit = if bootstrap > 0 {
        fit_with_p_value(sample, bootstrap, seed)?
    } else {
        fit_discrete_powerlaw(sample)?
    };
    Ok(fit.in_form(form))
}

fn fit(
    ctx: &Ctx,
    sample_path: &Path,
    of: Option<MotifSample>,
    form: TailForm,
    bootstrap: usize,
    out: &Path,
) -> CliResult<RunManifest> {
    let sample = read_sample(sample_path, of)?;
    let seed = ctx.global.seed.unwrap_or(0);
    let result = fit_sample(&sample, form, bootstrap, seed)?;
    let mut rec = ctx.recorder("fit", out)?;
    rec.input(sample_path)?;
    rec.param("sample_of", of.map(|o| format!("{o:?}")));
    rec.param("form", form);
    rec.param("bootstrap", bootstrap);
    if bootstrap > 0 {
        rec.seed(seed);
    }
    write_json(&rec.path("fit.json"), &result)?;
    rec.output("fit.json")?;
    Ok(rec.finish()?)
}

enum Source {
    Synth(SynthArgs),
    Tape(PathBuf, Session),
}

fn pipeline(ctx: &Ctx, source: Source, study: &StudyArgs, out: &Path) -> CliResult<RunManifest> {
    study_config(study)?;
    let mut stages: Vec<RunManifest> = Vec::new();
    let (tape, session, labels) = match &source {
        Source::Synth(args) => {
            let dir = out.join("synth");
            stages.push(synth(ctx, args, &dir)?);
            let config: MarketConfig = read_json(&args.config)?;
            (
                dir.join(ctx.records_name("tape")),
                config.session,
                Some(dir.join("labels.jsonl")),
            )
        }
        Source::Tape(path, session) => (path.clone(), *session, None),
    };
    let replay_dir = out.join("replay");
    stages.push(replay(ctx, &tape, session, &replay_dir)?);
    let trades = replay_dir.join(ctx.records_name("trades"));
    let quotes = replay_dir.join(ctx.records_name("quotes"));
    let motifs_dir = out.join("motifs");
    stages.push(motifs(ctx, &trades, &motifs_dir)?);
    let report = motifs_dir.join("motifs.json");
    stages.push(eventstudy(
        ctx,
        &trades,
        &quotes,
        &report,
        study,
        session,
        &out.join("eventstudy"),
    )?);
    stages.push(impact(
        ctx,
        &trades,
        &report,
        study.side,
        &out.join("impact"),
    )?);

    let mut rec = ctx.recorder("pipeline", out)?;
    match &source {
        Source::Synth(args) => {
            rec.input(&args.config)?;
            if let Some(plan) = &args.plan {
                rec.input(plan)?;
            }
            rec.param("injections", args.injections);
        }
        Source::Tape(path, _) => rec.input(path)?,
    }
    rec.param("session", session);
    rec.param("study", study_config(study)?);
    rec.param("format", ctx.global.format);
    if let Some(seed) = stages[0].seed {
        rec.seed(seed);
    }
    for stage in &stages {
        for note in &stage.notes {
            rec.quiet_note(format!("{}: {note}", stage.command));
        }
    }

    let fit_dir = out.join("fit");
    match fit(
        ctx,
        &report,
        Some(MotifSample::CEdges),
        TailForm::Density,
        0,
        &fit_dir,
    ) {
        Ok(m) => stages.push(m),
        Err(CliError::Core(e)) if e.is_input_error() => {
            rec.note(format!("C edge counts not fitted: {e}"))
        }
        Err(e) => return Err(e),
    }

    if let Some(labels_path) = labels {
        let labels: Vec<Label> = read_records(&labels_path, Format::Jsonl)?;
        let trades = read_trades(&trades)?;
        let report: MotifFileReport = read_json(&report)?;
        let score = score_labels(&trades, &report, &labels);
        if score.recovered < score.eligible || score.found < score.labels {
            rec.note(format!(
                "{} of {} labels found, {} of {} recovered as motifs",
                score.found, score.labels, score.recovered, score.eligible
            ));
        }
        write_json(&rec.path("recall.json"), &score)?;
        rec.output("recall.json")?;
    }
    for stage in &stages {
        let dir = out.join(&stage.command);
        for file in &stage.outputs {
            rec.nested_output(&dir.join(&file.path))?;
        }
        rec.nested_output(&dir.join(MANIFEST_FILE))?;
    }
    Ok(rec.finish()?)
}
