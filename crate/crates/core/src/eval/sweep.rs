use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport, ScenarioSpec};
use crate::error::Result;
use crate::sim::ExecutionMode;
use crate::trainer::{train, TrainConfig, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    /// Training seeds; every variant trains once per seed.
    pub seeds: Vec<u64>,
    pub eval_specs: Vec<(String, ScenarioSpec)>,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub mode: ExecutionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub variant: Variant,
    pub seed: u64,
    /// Evaluation report, or the error that stopped training.
    pub result: std::result::Result<EvalReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario_names: Vec<String>,
    pub variants: Vec<Variant>,
    pub runs: Vec<SweepRun>,
}

/// Trains every variant with the same budget for every seed, then evaluates
/// each result on all scenario specs. A failed run is recorded and the
/// sweep continues.
pub fn ablation_sweep(base: &TrainConfig, variants: &[Variant], settings: &SweepSettings) -> Result<SweepReport> {
    let mut runs = Vec::new();
    for &variant in variants {
        for &seed in &settings.seeds {
            let mut config = base.clone();
            config.seed = seed;
            variant.apply(&mut config);
            let result = train(&config, None)
                .and_then(|out| {
                    evaluate(
                        &out.checkpoint,
                        &settings.eval_specs,
                        settings.eval_episodes,
                        settings.eval_seed,
                        settings.mode,
                    )
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                tracing::warn!(variant = variant.name(), seed, error = %e, "sweep run failed");
            }
            runs.push(SweepRun { variant, seed, result });
        }
    }
    Ok(SweepReport {
        scenario_names: settings.eval_specs.iter().map(|(n, _)| n.clone()).collect(),
        variants: variants.to_vec(),
        runs,
    })
}

/// Per-variant means over the successful seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub completed: usize,
    /// Success rate per scenario, in `scenario_names` order.
    pub success_rate: Vec<f64>,
    /// Reach time per scenario; `None` when no run reached the goal.
    pub reach_time: Vec<Option<f64>>,
}

impl VariantSummary {
    pub fn mean_success_rate(&self) -> f64 {
        if self.success_rate.is_empty() {
            return f64::NAN;
        }
        self.success_rate.iter().sum::<f64>() / self.success_rate.len() as f64
    }

    /// Average reach time; `None` if any scenario has none.
    pub fn mean_reach_time(&self) -> Option<f64> {
        let times: Option<Vec<f64>> = self.reach_time.iter().copied().collect();
        times.filter(|t| !t.is_empty()).map(|t| t.iter().sum::<f64>() / t.len() as f64)
    }
}

impl SweepReport {
    pub fn summaries(&self) -> Vec<VariantSummary> {
        self.variants
            .iter()
            .map(|&variant| {
                let reports: Vec<&EvalReport> = self
                    .runs
                    .iter()
                    .filter(|r| r.variant == variant)
                    .filter_map(|r| r.result.as_ref().ok())
                    .collect();
                let k = reports.len() as f64;
                let (mut success_rate, mut reach_time) = (Vec::new(), Vec::new());
                for i in 0..self.scenario_names.len() {
                    success_rate.push(reports.iter().map(|r| r.scenarios[i].success_rate).sum::<f64>() / k);
                    let times: Vec<f64> = reports.iter().filter_map(|r| r.scenarios[i].reach_time).collect();
                    reach_time.push((!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64));
                }
                VariantSummary {
                    variant,
                    completed: reports.len(),
                    success_rate,
                    reach_time,
                }
            })
            .collect()
    }

    /// One SR block and one RT block, variants as rows and scenarios plus
    /// the average as columns.
    pub fn table(&self) -> String {
        let summaries = self.summaries();
        let mut header = format!("{:<6} {:<10}", "", "variant");
        for name in &self.scenario_names {
            header.push_str(&format!(" {name:>8}"));
        }
        header.push_str(&format!(" {:>8}\n", "average"));
        let mut out = header;
        for s in &summaries {
            out.push_str(&format!("{:<6} {:<10}", "SR", s.variant.name()));
            for v in &s.success_rate {
                out.push_str(&format!(" {v:>8.3}"));
            }
            out.push_str(&format!(" {:>8.3}\n", s.mean_success_rate()));
        }
        for s in &summaries {
            out.push_str(&format!("{:<6} {:<10}", "RT", s.variant.name()));
            for v in &s.reach_time {
                out.push_str(&format!(" {:>8}", v.map_or("/".into(), |t| format!("{t:.2}"))));
            }
            out.push_str(&format!(" {:>8}\n", s.mean_reach_time().map_or("/".into(), |t| format!("{t:.2}"))));
        }
        out
    }

    /// Long format: one line per (variant, seed, scenario).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variant", "seed", "scenario", "success_rate", "reach_time", "error"])?;
        for run in &self.runs {
            match &run.result {
                Ok(report) => {
                    for s in &report.scenarios {
                        w.write_record([
                            run.variant.name().to_string(),
                            run.seed.to_string(),
                            s.name.clone(),
                            s.success_rate.to_string(),
                            s.reach_time.map_or_else(String::new, |t| t.to_string()),
                            String::new(),
                        ])?;
                    }
                }
                Err(e) => w.write_record([
                    run.variant.name().to_string(),
                    run.seed.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.clone(),
                ])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}
