//! End-to-end experiment runner: partition, transition matrix, step-skew
//! diagnostics, network build, pipe-flow orbits, and path-law analysis,
//! with a hashed manifest of every artifact.

use crate::config::ExperimentConfig;
use crate::dynamics::{generic_doubling_orbit, iterate_map, MapSystem, Trajectory};
use crate::network::{build_network, OrbitRecord, PipeNetwork};
use crate::partition::{build_box_partition, estimate_transition_matrix, BoxPartition};
use crate::paths::{law_comparison, path_from_orbit, shadowing_fraction, PathSample};
use crate::rng::Stream;
use crate::stepskew::{exact_match_fraction, StepSkewProcess};
use crate::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::PathBuf;

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub status: String,
    pub details: serde_json::Value,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub stages: Vec<StageReport>,
    pub files: Vec<ManifestFile>,
    /// true when a stage aborted and later outputs are missing
    pub partial: bool,
    pub error: Option<String>,
    /// every configured acceptance check passed
    pub pass: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    out: PathBuf,
    stages: Vec<StageReport>,
    written: Vec<String>,
}

impl<'a> Runner<'a> {
    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.out.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn record(&mut self, stage: &str, details: serde_json::Value, outputs: Vec<String>) {
        self.stages.push(StageReport {
            stage: stage.to_string(),
            status: "ok".into(),
            details,
            outputs,
        });
    }

    fn finish(mut self, error: Option<&Error>, pass: bool) -> Result<Manifest> {
        if let Some(err) = error {
            self.stages.push(StageReport {
                stage: match err {
                    Error::Stage { stage, .. } => stage.clone(),
                    _ => "unknown".into(),
                },
                status: "failed".into(),
                details: serde_json::json!({ "error": err.to_string() }),
                outputs: vec![],
            });
        }
        let mut files = Vec::new();
        for name in &self.written {
            let bytes = fs::read(self.out.join(name))?;
            files.push(ManifestFile {
                path: name.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            config: self.config.clone(),
            stages: self.stages,
            files,
            partial: error.is_some(),
            error: error.map(|e| e.to_string()),
            pass: pass && error.is_none(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.out.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

fn stage_err(stage: &str) -> impl Fn(Error) -> Error + '_ {
    move |source| Error::Stage {
        stage: stage.to_string(),
        source: Box::new(source),
    }
}

/// Sampling orbit on the attractor. The doubling map takes the symbolic
/// route (floating-point doubling collapses); other systems iterate from a
/// seeded start with a burn-in.
pub fn sampling_orbit(system: &MapSystem, seed: u64, len: usize) -> Result<Trajectory> {
    if system.name == "doubling" {
        return Ok(generic_doubling_orbit(seed, len));
    }
    let stream = Stream::new(seed);
    let x0: Vec<f64> = system
        .domain
        .lo
        .iter()
        .zip(&system.domain.hi)
        .enumerate()
        .map(|(c, (&lo, &hi))| lo + stream.uniform(c as u64) * (hi - lo) * 0.999)
        .collect();
    let burn = 1000;
    let full = iterate_map(system, &x0, len + burn)?;
    Ok(Trajectory {
        points: full.points[burn..].to_vec(),
    })
}

/// How far down the pipeline to run; each boundary includes everything
/// before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StopAfter {
    Partition,
    Stepskew,
    Pipeflow,
    Comparison,
}

/// Run the full pipeline and write every artifact plus `manifest.json`
/// under the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    run_pipeline(config, StopAfter::Comparison)
}

/// Run the pipeline through the given stage boundary.
pub fn run_pipeline(config: &ExperimentConfig, stop: StopAfter) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut runner = Runner {
        config,
        out: config.out_dir.clone(),
        stages: Vec::new(),
        written: Vec::new(),
    };
    let keys = Stream::new(config.seed);
    let mut pass = true;

    match run_stages(config, &keys, &mut runner, &mut pass, stop) {
        Ok(()) => runner.finish(None, pass),
        Err(err) => {
            let manifest = runner.finish(Some(&err), false)?;
            drop(manifest);
            Err(err)
        }
    }
}

fn run_stages(
    config: &ExperimentConfig,
    keys: &Stream,
    runner: &mut Runner<'_>,
    pass: &mut bool,
    stop: StopAfter,
) -> Result<()> {
    let system = config.build_system()?;

    // stage 1: partition from an attractor sampling orbit
    let stage = "partition";
    let origin = vec![0.0; system.dim];
    let traj = sampling_orbit(&system, keys.word(0), config.orbit_length).map_err(stage_err(stage))?;
    let partition = build_box_partition(&traj.points, config.mesh, &origin).map_err(stage_err(stage))?;
    let partition_json = serde_json::to_string_pretty(&partition.to_json())?;
    runner.write_file("partition.json", partition_json.as_bytes())?;
    runner.record(
        stage,
        serde_json::json!({
            "cells": partition.len(),
            "mesh": config.mesh,
            "samples": traj.points.len(),
        }),
        vec!["partition.json".into()],
    );

    // stage 2: transition matrix estimate
    let stage = "transition";
    let matrix = estimate_transition_matrix(&traj, &partition).map_err(stage_err(stage))?;
    let mut matrix_csv = Vec::new();
    matrix.write_csv(&mut matrix_csv).map_err(stage_err(stage))?;
    runner.write_file("matrix.csv", &matrix_csv)?;
    let column_error = matrix.max_column_sum_error();
    runner.record(
        stage,
        serde_json::json!({
            "m": matrix.m,
            "max_column_sum_error": column_error,
        }),
        vec!["matrix.csv".into()],
    );
    *pass &= column_error <= 1e-9;
    if stop == StopAfter::Partition {
        return Ok(());
    }

    // stage 3: step-skew diagnostics
    let stage = "stepskew";
    let process = StepSkewProcess::new(&matrix, &partition, &system, keys.word(1));
    let match_steps = config.pipeflow.steps.min(8);
    let report = exact_match_fraction(
        &process,
        &traj.points,
        match_steps,
        config.stepskew_trials,
        keys.word(2),
    )
    .map_err(stage_err(stage))?;
    let match_ok = (report.fraction - report.oracle).abs()
        <= crate::stats::three_sigma(report.oracle.clamp(1e-6, 1.0 - 1e-6), report.trials);
    runner.write_file(
        "stepskew.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    runner.record(
        stage,
        serde_json::json!({
            "match_fraction": report.fraction,
            "oracle": report.oracle,
            "within_3_sigma": match_ok,
        }),
        vec!["stepskew.json".into()],
    );
    *pass &= match_ok;
    if stop == StopAfter::Stepskew {
        return Ok(());
    }

    // stage 4: network build
    let stage = "network";
    let net = build_network(&matrix, &partition, &system, config.network_params())
        .map_err(stage_err(stage))?;
    let quota_error = net
        .junctions
        .iter()
        .map(|j| j.readout.max_quota_error())
        .fold(0.0, f64::max);
    runner.write_file(
        "network.json",
        serde_json::to_string_pretty(&net.to_json())?.as_bytes(),
    )?;
    runner.record(
        stage,
        serde_json::json!({
            "junctions": net.junctions.len(),
            "max_quota_error": quota_error,
        }),
        vec!["network.json".into()],
    );

    // stage 5: pipe-flow orbits
    let stage = "pipeflow";
    let (orbits, paths, truncated) =
        pipeflow_orbits(config, &net, &partition, &traj, keys.word(3)).map_err(stage_err(stage))?;
    let mut orbits_csv = Vec::new();
    {
        use std::io::Write;
        writeln!(&mut orbits_csv, "orbit,n,t,cell,fiber,branch,crossed")?;
        for (k, record) in orbits.iter().enumerate() {
            for (n, step) in record.steps.iter().enumerate() {
                let coords: Vec<String> =
                    step.fiber.iter().map(|x| format!("{x:.17e}")).collect();
                writeln!(
                    &mut orbits_csv,
                    "{},{},{},{},{},{},{}",
                    k,
                    n + 1,
                    3 * (n + 1),
                    step.cell,
                    coords.join(";"),
                    step.branch,
                    step.crossed
                )?;
            }
        }
    }
    runner.write_file("orbits.csv", &orbits_csv)?;
    let truncated_rate = truncated as f64 / orbits.len() as f64;
    runner.record(
        stage,
        serde_json::json!({
            "orbits": orbits.len(),
            "steps": config.pipeflow.steps,
            "truncated": truncated,
            "truncated_rate": truncated_rate,
        }),
        vec!["orbits.csv".into()],
    );
    *pass &= truncated_rate <= 1e-3;
    if stop == StopAfter::Pipeflow {
        return Ok(());
    }

    // stage 6: path-law comparison and shadowing
    let stage = "comparison";
    let table =
        law_comparison(&paths, &matrix, config.comparison_max_len).map_err(stage_err(stage))?;
    let mut comparison_csv = Vec::new();
    table.write_csv(&mut comparison_csv).map_err(stage_err(stage))?;
    runner.write_file("comparison.csv", &comparison_csv)?;
    let shadow = shadowing_fraction(
        &paths,
        &system,
        &partition,
        &matrix,
        config.shadowing_delta(),
        config.pipeflow.steps,
    )
    .map_err(stage_err(stage))?;
    runner.write_file(
        "shadowing.json",
        serde_json::to_string_pretty(&shadow)?.as_bytes(),
    )?;
    let law_ok = table.max_deviation <= 0.03;
    runner.record(
        stage,
        serde_json::json!({
            "max_deviation": table.max_deviation,
            "cylinders": table.rows.len(),
            "law_within_budget": law_ok,
            "shadowing_fraction": shadow.fraction,
            "shadowing_oracle": shadow.oracle,
        }),
        vec!["comparison.csv".into(), "shadowing.json".into()],
    );
    *pass &= law_ok;
    Ok(())
}

/// Sample pipe-flow orbits starting from attractor points of the sampling
/// orbit, cycling through it; returns the records, their path samples, and
/// the count of truncated orbits.
fn pipeflow_orbits(
    config: &ExperimentConfig,
    net: &PipeNetwork<'_>,
    partition: &BoxPartition,
    traj: &Trajectory,
    seed: u64,
) -> Result<(Vec<OrbitRecord>, Vec<PathSample>, usize)> {
    let mut starts = Vec::with_capacity(config.pipeflow.orbits);
    let mut k = 0usize;
    while starts.len() < config.pipeflow.orbits {
        let x = &traj.points[k % traj.points.len()];
        k += 1;
        if let Some(cell) = partition.locate(x) {
            let fiber = partition.chart(cell).to_model(x)?;
            starts.push((cell, fiber));
        }
        if k > 2 * config.pipeflow.orbits + traj.points.len() {
            return Err(Error::EmptySamples);
        }
    }
    let orbits = net.run_orbits(seed, &starts, config.pipeflow.steps);
    let truncated = orbits.iter().filter(|o| o.truncated.is_some()).count();
    let paths: Vec<PathSample> = orbits
        .iter()
        .filter(|o| o.truncated.is_none())
        .map(|o| path_from_orbit(partition, o))
        .collect::<Result<_>>()?;
    Ok((orbits, paths, truncated))
}
