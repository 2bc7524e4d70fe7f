//! JSON reports written by the command-line tool.

use serde::Serialize;

use sectrans_core::demand::{analyze_system, offset_extended_np_test, Status, Verdict};
use sectrans_core::edf_sim::{Trace, TimingReport};
use sectrans_core::model::{ModelError, Resource, SystemModel};
use sectrans_core::time::{Resolution, Tick};

use crate::schema::SCHEMA_VERSION;
use crate::trace_io::resource_name;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessReport {
    pub t1: Tick,
    pub t2: Tick,
    pub demand: Tick,
    pub supply: Tick,
    /// The interval in time units.
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceVerdict {
    pub resource: String,
    pub tasks: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
}

impl ResourceVerdict {
    pub fn new(system: &SystemModel, r: Resource, v: &Verdict) -> Self {
        let res = system.resolution;
        ResourceVerdict {
            resource: resource_name(r),
            tasks: system.tasks_on(r).len(),
            status: v.status,
            witness: v.witness.map(|w| WitnessReport {
                t1: w.interval.t1,
                t2: w.interval.t2,
                demand: w.demand,
                supply: w.supply,
                interval: (res.to_units(w.interval.t1), res.to_units(w.interval.t2)),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub ticks_per_unit: u32,
    pub schedulable: bool,
    pub resources: Vec<ResourceVerdict>,
    /// Verdict of the older offset-extended bus test, for comparison only; it
    /// can accept message sets that miss deadlines.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bus_offset_extended_test: Option<Status>,
}

pub fn analysis_report(system: &SystemModel) -> Result<AnalysisReport, ModelError> {
    let resources: Vec<ResourceVerdict> =
        analyze_system(system)?.iter().map(|(r, v)| ResourceVerdict::new(system, *r, v)).collect();
    let msgs = system.bus_messages();
    let legacy = if msgs.is_empty() { None } else { Some(offset_extended_np_test(&msgs)?.status) };
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        ticks_per_unit: system.resolution.ticks_per_unit(),
        schedulable: resources.iter().all(|v| v.status == Status::Schedulable),
        resources,
        bus_offset_extended_test: legacy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MissReport {
    pub resource: String,
    pub task: u32,
    pub job: u64,
    pub time: Tick,
    pub time_units: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceSimulation {
    pub resource: String,
    pub events: usize,
    pub misses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub horizon: Tick,
    pub ticks_per_unit: u32,
    pub resources: Vec<ResourceSimulation>,
    pub misses: Vec<MissReport>,
    pub timing: TimingReport,
    /// Demand verdicts of the simulated parameters, when a solution was imported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Vec<ResourceVerdict>>,
}

impl SimulationReport {
    pub fn new(res: Resolution, horizon: Tick, traces: &[(Resource, Trace)], timing: TimingReport) -> Self {
        let resources = traces
            .iter()
            .map(|(r, t)| ResourceSimulation { resource: resource_name(*r), events: t.events.len(), misses: t.miss_count() })
            .collect();
        let misses = traces
            .iter()
            .flat_map(|(r, t)| {
                t.misses().map(move |e| MissReport {
                    resource: resource_name(*r),
                    task: e.task,
                    job: e.job,
                    time: e.time,
                    time_units: res.to_units(e.time),
                })
            })
            .collect();
        SimulationReport {
            schema_version: SCHEMA_VERSION,
            horizon,
            ticks_per_unit: res.ticks_per_unit(),
            resources,
            misses,
            timing,
            analysis: None,
        }
    }

    pub fn clean(&self) -> bool {
        self.misses.is_empty()
            && self.timing.is_clean()
            && self.analysis.iter().flatten().all(|v| v.status == Status::Schedulable)
    }
}
