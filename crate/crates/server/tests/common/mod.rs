//! A model store built from the shipped fixtures through the command line.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use tempfile::TempDir;
use tutorviz::cli::{run, Cli};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Runs one command line against `store` and returns what it printed.
pub fn tutorviz(store: &Path, args: &[&str]) -> anyhow::Result<String> {
    let mut argv = vec!["tutorviz".to_string(), "--store".into(), store.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    let mut out = Vec::new();
    run(Cli::try_parse_from(argv)?, &mut out)?;
    Ok(String::from_utf8(out)?)
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap().to_string()
}

pub struct Fixture {
    pub dir: TempDir,
    pub corpus87: String,
    pub periods: String,
    /// One cluster over the whole 87-student corpus.
    pub whole: String,
    /// One cluster over the two-era corpus.
    pub eras: String,
}

pub fn build() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path();
    let config = fixture("demo_config.json");
    let config = config.to_str().unwrap();
    let corpus87 =
        first_line(&tutorviz(store, &["ingest", "--config", config, fixture("corpus87/events.jsonl").to_str().unwrap()]).unwrap());
    let periods = first_line(
        &tutorviz(
            store,
            &[
                "ingest",
                "--config",
                config,
                "--changes",
                fixture("periods/changes.json").to_str().unwrap(),
                fixture("periods/events.jsonl").to_str().unwrap(),
            ],
        )
        .unwrap(),
    );
    let whole = first_line(&tutorviz(store, &["build", &corpus87]).unwrap());
    let eras = first_line(&tutorviz(store, &["build", &periods]).unwrap());
    Fixture { dir, corpus87, periods, whole, eras }
}
