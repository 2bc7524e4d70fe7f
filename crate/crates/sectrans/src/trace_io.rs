//! CSV export of simulation traces and closed-loop trajectories.

use std::io::Write;

use serde::Serialize;

use sectrans_core::edf_sim::Trace;
use sectrans_core::model::Resource;
use sectrans_core::opportunistic::SPORADIC_TASK;
use sectrans_core::qoc_sim::Trajectories;
use sectrans_core::time::Tick;

pub fn resource_name(r: Resource) -> String {
    match r {
        Resource::Ecu(id) => format!("ecu{id}"),
        Resource::Bus => "bus".into(),
    }
}

#[derive(Serialize)]
struct TraceRow<'a> {
    resource: &'a str,
    time: Tick,
    task: String,
    job: u64,
    event: &'static str,
}

/// One row per event: resources in the given order, events in trace order.
/// Sporadic frames show up as task `sporadic`.
pub fn write_trace_csv<W: Write>(out: W, traces: &[(Resource, Trace)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (r, trace) in traces {
        let name = resource_name(*r);
        for e in &trace.events {
            let task = if e.task == SPORADIC_TASK { "sporadic".to_string() } else { e.task.to_string() };
            w.serialize(TraceRow { resource: &name, time: e.time, task, job: e.job, event: e.kind.as_str() })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn trace_csv(traces: &[(Resource, Trace)]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, traces).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Columns: `step, authenticated, alarm, residual_energy, error_norm`, then
/// `x{i}`, `x_hat{i}`, `e{i}` per state and `a{j}` per output.
pub fn trajectory_csv(t: &Trajectories) -> String {
    let n = t.x.first().map_or(0, Vec::len);
    let q = t.attack.first().map_or(0, Vec::len);
    let mut header: Vec<String> =
        ["step", "authenticated", "alarm", "residual_energy", "error_norm"].iter().map(|s| s.to_string()).collect();
    for prefix in ["x", "x_hat", "e"] {
        header.extend((0..n).map(|i| format!("{prefix}{i}")));
    }
    header.extend((0..q).map(|j| format!("a{j}")));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("writing to memory");
    let norms = t.error_norms();
    for k in 0..t.error.len() {
        let mut row = vec![
            k.to_string(),
            u8::from(t.authenticated[k]).to_string(),
            u8::from(t.alarms[k]).to_string(),
            t.residual_energy[k].to_string(),
            norms[k].to_string(),
        ];
        for series in [&t.x, &t.x_hat, &t.error] {
            row.extend(series[k].iter().map(f64::to_string));
        }
        row.extend(t.attack[k].iter().map(f64::to_string));
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use sectrans_core::edf_sim::{Event, EventKind};

    #[test]
    fn trace_rows_keep_resource_then_event_order() {
        let ev = |time, task, kind| Event { time, task, job: 0, kind };
        let traces = vec![
            (Resource::Ecu(0), Trace { horizon: 10, events: vec![ev(0, 1, EventKind::Release), ev(0, 1, EventKind::Start)] }),
            (Resource::Bus, Trace { horizon: 10, events: vec![ev(3, SPORADIC_TASK, EventKind::Complete)] }),
        ];
        assert_eq!(
            trace_csv(&traces),
            "resource,time,task,job,event\necu0,0,1,0,release\necu0,0,1,0,start\nbus,3,sporadic,0,complete\n"
        );
    }

    #[test]
    fn trajectory_header_follows_dimensions() {
        let t = Trajectories {
            x: vec![vec![1.0, 2.0]],
            x_hat: vec![vec![1.0, 2.0]],
            error: vec![vec![3.0, 4.0]],
            attack: vec![vec![0.5]],
            residual_energy: vec![0.0],
            alarms: vec![false],
            authenticated: vec![true],
        };
        let text = trajectory_csv(&t);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,authenticated,alarm,residual_energy,error_norm,x0,x1,x_hat0,x_hat1,e0,e1,a0"));
        assert_eq!(lines.next(), Some("0,1,0,0,5,1,2,1,2,3,4,0.5"));
    }
}
