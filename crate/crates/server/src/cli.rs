//! Command-line front end. Commands write their report to the given writer
//! so they can be driven in-process by tests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tutorviz_core::cluster::{ClusterParams, Feature, Method};
use tutorviz_core::layout::LayoutGraph;
use tutorviz_core::render::{to_dot, to_svg};
use tutorviz_core::replay::{
    files_under, generate_corpus, generate_raw_actions, parse_corpus_paths, parse_raw_actions, replay_all, write_corpus, Diagnostic,
    Profile,
};
use tutorviz_core::views::{compare_periods, filtered_layout, logs_in_range, FilterSpec};
use tutorviz_core::{validate_config, AssignmentConfig};

use crate::api::{parse_instant, router_for};
use crate::store::Store;
use crate::STORE_ENV;

#[derive(Debug, Parser)]
#[command(name = "tutorviz", version, about = "Collective student models from tutor logs")]
pub struct Cli {
    /// Model store directory.
    #[arg(long, global = true, env = STORE_ENV, default_value = "tutorviz-store")]
    pub store: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Svg,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read event records (or raw actions with --raw) into the store.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Inputs are raw actions to be classified by replaying the tutor.
        #[arg(long)]
        raw: bool,
        /// JSON object mapping error labels such as f1t20_f1t16 to change ids.
        #[arg(long)]
        changes: Option<PathBuf>,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Write a synthetic corpus for a list of student profiles.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// JSON array of profiles.
        #[arg(long)]
        profiles: PathBuf,
        /// Emit raw actions instead of classified event records.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a stored corpus and precompute automata and layouts.
    Build {
        corpus_id: String,
        #[arg(long, default_value = "none")]
        method: Method,
        #[arg(long, default_value = "zone-events")]
        feature: Feature,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        /// Component count for EM.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Standardise feature dimensions before clustering.
        #[arg(long)]
        normalize: bool,
    },
    /// Serve the HTTP API over the store.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Compare error frequencies between two date ranges of a corpus.
    Compare {
        corpus_id: String,
        #[arg(long)]
        from_a: String,
        #[arg(long)]
        to_a: String,
        #[arg(long)]
        from_b: String,
        #[arg(long)]
        to_b: String,
        /// Also list rows below 30% in both periods.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        json: bool,
    },
    /// Render a cluster's layout as SVG or DOT.
    Export {
        model_id: String,
        #[arg(long, default_value_t = 0)]
        cluster: usize,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long, default_value_t = 0.0)]
        min_node_freq: f64,
        #[arg(long, default_value_t = 0.0)]
        min_edge_freq: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> Result<AssignmentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = AssignmentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let violations = validate_config(&config);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("invalid assignment configuration {}:\n  {}", path.display(), list.join("\n  "));
    }
    Ok(config)
}

fn date(value: &str, end_of_day: bool) -> Result<chrono::DateTime<chrono::Utc>> {
    parse_instant(value, end_of_day).with_context(|| format!("{value:?} is not a date (YYYY-MM-DD or RFC 3339)"))
}

fn ingest(store: &Store, config: &PathBuf, raw: bool, changes: Option<&PathBuf>, paths: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let config = load_config(config)?;
    let mut files = Vec::new();
    for p in paths {
        files.extend(files_under(p).with_context(|| format!("reading {}", p.display()))?);
    }
    if files.is_empty() {
        bail!("no input files under {}", paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    }
    let (logs, diagnostics): (_, Vec<Diagnostic>) = if raw {
        let mut actions = Vec::new();
        let mut diagnostics = Vec::new();
        for f in &files {
            let name = f.display().to_string();
            let reader = std::io::BufReader::new(fs::File::open(f).with_context(|| format!("opening {name}"))?);
            let (a, d) = parse_raw_actions(reader, Some(&name))?;
            actions.extend(a);
            diagnostics.extend(d);
        }
        actions.sort_by_key(|a| a.timestamp);
        (replay_all(&actions, &config)?, diagnostics)
    } else {
        let corpus = parse_corpus_paths(&files)?;
        (corpus.logs, corpus.diagnostics)
    };
    for d in &diagnostics {
        eprintln!("warning: {d}");
    }
    if logs.is_empty() {
        bail!("no student logs found ({} diagnostics)", diagnostics.len());
    }
    let changes: BTreeMap<String, String> = match changes {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => BTreeMap::new(),
    };
    let record = store.ingest(&config, &logs, &diagnostics, &changes)?;
    writeln!(out, "{}", record.corpus_id)?;
    writeln!(out, "{} students, {} events, {} diagnostics", record.n_students, record.n_events, record.diagnostics.len())?;
    Ok(())
}

fn generate(config: &PathBuf, profiles: &PathBuf, raw: bool, target: Option<&PathBuf>, out: &mut dyn Write) -> Result<()> {
    let config = load_config(config)?;
    let profiles: Vec<Profile> =
        serde_json::from_str(&fs::read_to_string(profiles).with_context(|| format!("reading {}", profiles.display()))?)
            .with_context(|| format!("parsing {}", profiles.display()))?;
    let mut buf = Vec::new();
    if raw {
        for stream in generate_raw_actions(&config, &profiles)? {
            for a in stream {
                serde_json::to_writer(&mut buf, &a)?;
                buf.push(b'\n');
            }
        }
    } else {
        write_corpus(&generate_corpus(&config, &profiles)?, &mut buf)?;
    }
    match target {
        Some(p) => fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(&buf)?,
    }
    Ok(())
}

fn export(
    store: &Store,
    model_id: &str,
    cluster: usize,
    format: ExportFormat,
    spec: FilterSpec,
    target: Option<&PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let a = store.automaton(model_id, cluster)?;
    let layout: LayoutGraph = store.layout(model_id, cluster)?;
    let shown = filtered_layout(&layout, &a, &spec);
    let text = match format {
        ExportFormat::Svg => to_svg(&shown),
        ExportFormat::Dot => to_dot(&shown),
    };
    match target {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let store = Store::open(&cli.store)?;
    match cli.command {
        Command::Ingest { config, raw, changes, paths } => ingest(&store, &config, raw, changes.as_ref(), &paths, out),
        Command::Generate { config, profiles, raw, out: target } => generate(&config, &profiles, raw, target.as_ref(), out),
        Command::Build { corpus_id, method, feature, k_min, k_max, k, seed, normalize } => {
            let params = ClusterParams { k_min, k_max, k, seed, normalize };
            let record = store.build(&corpus_id, method, feature, &params)?;
            writeln!(out, "{}", record.model_id)?;
            writeln!(out, "{:>7} {:>8} {:>6} {:>6}  centroid", "cluster", "students", "states", "edges")?;
            for c in &record.clusters {
                let centroid: Vec<String> = c.centroid.iter().map(|x| format!("{x:.2}")).collect();
                writeln!(out, "{:>7} {:>8} {:>6} {:>6}  [{}]", c.cluster, c.n_students, c.states, c.edges, centroid.join(", "))?;
            }
            Ok(())
        }
        Command::Serve { port, host } => {
            let app = router_for(&store)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener =
                    tokio::net::TcpListener::bind((host.as_str(), port)).await.with_context(|| format!("binding {host}:{port}"))?;
                eprintln!("serving {} on http://{}", store.root().display(), listener.local_addr()?);
                axum::serve(listener, app).await?;
                Ok(())
            })
        }
        Command::Compare { corpus_id, from_a, to_a, from_b, to_b, all, json } => {
            let corpus = store.corpus(&corpus_id)?;
            let a: Vec<_> = logs_in_range(&corpus.logs, date(&from_a, false)?, date(&to_a, true)?)?.into_iter().cloned().collect();
            let b: Vec<_> = logs_in_range(&corpus.logs, date(&from_b, false)?, date(&to_b, true)?)?.into_iter().cloned().collect();
            if a.is_empty() || b.is_empty() {
                bail!("no data in range: period A has {} students, period B has {}", a.len(), b.len());
            }
            let cmp = compare_periods(&a, &b, &corpus.record.changes)?;
            if json {
                serde_json::to_writer_pretty(&mut *out, &cmp)?;
                writeln!(out)?;
                return Ok(());
            }
            writeln!(out, "period A: {} students, period B: {} students", cmp.n_a, cmp.n_b)?;
            writeln!(out, "{:<10} {:<8} {:<20} {:>7} {:>7} {:>7}", "change", "action", "error", "freq A", "freq B", "diff")?;
            for r in cmp.rows.iter().filter(|r| all || !r.suppressed) {
                writeln!(
                    out,
                    "{:<10} {:<8} {:<20} {:>7.3} {:>7.3} {:>7.3}",
                    r.change_id.as_deref().unwrap_or("-"),
                    r.action,
                    r.error,
                    r.freq_a,
                    r.freq_b,
                    r.difference
                )?;
            }
            match cmp.t_test {
                Some(t) => {
                    writeln!(out, "t-test, changed vs unchanged differences: t = {:.3}, df = {:.1}, p = {:.4}", t.t, t.df, t.p_value)?
                }
                None => writeln!(out, "t-test: not enough changed and unchanged errors")?,
            }
            match cmp.u_test {
                Some(u) => writeln!(out, "Mann-Whitney U on grades: U = {:.1}, p = {:.4}", u.u, u.p_value)?,
                None => writeln!(out, "Mann-Whitney U: grades missing")?,
            }
            Ok(())
        }
        Command::Export { model_id, cluster, format, min_node_freq, min_edge_freq, out: target } => {
            let spec = FilterSpec::new(min_node_freq, min_edge_freq)?;
            export(&store, &model_id, cluster, format, spec, target.as_ref(), out)
        }
    }
}
