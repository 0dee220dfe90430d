//! Seeded route-grammar sampler.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InstanceConfig, JobSource, JobSpec, RouteStage};
use crate::ids::{AreaId, CellId, JobId};

/// Stream id used for job sampling so world randomness stays independent.
const JOB_STREAM: u64 = 0x6a0b;

/// Parameters of a non-degenerate route grammar: every stage is eligible in
/// `areas_per_stage` distinct areas with a small eligible-cell set in each.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RouteGrammar {
    pub name: String,
    pub job_count: u32,
    pub stages: u32,
    pub areas_per_stage: u32,
    pub min_cells_per_area: u32,
    #[serde(default)]
    pub extra_cell_probability: f64,
    pub processing_time: [f64; 2],
    pub setup_families: u32,
    #[serde(default = "default_slack")]
    pub due_slack_factor: f64,
}

fn default_slack() -> f64 {
    1.5
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Instantiates the job list for `seed`. Explicit job lists are returned
/// unchanged; grammars are sampled deterministically.
pub fn generate_jobs(config: &InstanceConfig, seed: u64) -> Vec<JobSpec> {
    let g = match &config.jobs {
        JobSource::Explicit(jobs) => return jobs.clone(),
        JobSource::Grammar(g) => g,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(JOB_STREAM);
    let h = &config.hierarchy;
    let n_areas = h.areas.len();
    let release_of = |j: JobId| {
        config
            .scenario
            .arrival_plan
            .iter()
            .find(|b| b.jobs.contains(&j))
            .map(|b| b.time)
            .unwrap_or(0.0)
    };

    (0..g.job_count)
        .map(|j| {
            let job_id = JobId(j);
            let route: Vec<RouteStage> = (0..g.stages)
                .map(|s| {
                    let k = (g.areas_per_stage as usize).min(n_areas);
                    let mut areas: Vec<usize> = sample(&mut rng, n_areas, k).into_vec();
                    areas.sort_unstable();
                    let mut eligible = Vec::new();
                    for a in areas {
                        let cells: Vec<CellId> = h.cells_in(AreaId(a as u32)).collect();
                        let mut want = g.min_cells_per_area as usize;
                        if g.extra_cell_probability > 0.0 && rng.random_bool(g.extra_cell_probability) {
                            want += 1;
                        }
                        let want = want.clamp(1, cells.len());
                        for i in sample(&mut rng, cells.len(), want) {
                            eligible.push(cells[i]);
                        }
                    }
                    eligible.sort_unstable();
                    let [lo, hi] = g.processing_time;
                    RouteStage {
                        stage_index: s,
                        eligible_cells: eligible,
                        base_processing_time: round2(rng.random_range(lo..=hi)),
                        setup_family: rng.random_range(0..g.setup_families),
                    }
                })
                .collect();
            let release_time = release_of(job_id);
            let work: f64 = route.iter().map(|r| r.base_processing_time).sum();
            JobSpec { job_id, route, release_time, due_date: Some(release_time + g.due_slack_factor * work) }
        })
        .collect()
}
