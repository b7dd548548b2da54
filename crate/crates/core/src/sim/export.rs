use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::run::RunRecord;
use super::validate::ValidationReport;
use crate::document::{check_version, Provenance, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{Shape, Workspace};
use crate::plant::LocStatus;

/// Versioned simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDocument {
    pub format_version: u32,
    pub provenance: Provenance,
    pub schedule_hash: String,
    pub presample: bool,
    pub report: ValidationReport,
    /// Runs whose timed action trace broke a feasibility rule.
    pub infeasible_runs: usize,
}

impl SimulationDocument {
    pub fn new(
        provenance: Provenance,
        schedule_hash: String,
        presample: bool,
        report: ValidationReport,
        infeasible_runs: usize,
    ) -> Self {
        Self { format_version: FORMAT_VERSION, provenance, schedule_hash, presample, report, infeasible_runs }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "simulation report")
    }
}

fn status_name(s: LocStatus) -> &'static str {
    match s {
        LocStatus::Off => "off",
        LocStatus::Booting => "booting",
        LocStatus::On => "on",
    }
}

/// One row per recorded trace point: `run,t,x,y,est_x,est_y,cov_trace,status`.
pub fn write_traces_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "t", "x", "y", "est_x", "est_y", "cov_trace", "status"]).map_err(csv_err)?;
    for (k, r) in records.iter().enumerate() {
        for p in &r.trace {
            w.write_record([
                k.to_string(),
                format!("{:.4}", p.t),
                format!("{:.6}", p.x),
                format!("{:.6}", p.y),
                format!("{:.6}", p.est_x),
                format!("{:.6}", p.est_y),
                format!("{:.6e}", p.cov_trace),
                status_name(p.status).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn status_color(s: LocStatus) -> &'static str {
    match s {
        LocStatus::Off => "#9ecae1",
        LocStatus::Booting => "#4292c6",
        LocStatus::On => "#08306b",
    }
}

/// Static SVG of the workspace, the waypoints and the recorded trajectories,
/// colored by localization status.
pub fn render_svg(workspace: &Workspace, waypoints: &[[f64; 2]], records: &[RunRecord]) -> String {
    let b = workspace.bounds;
    let (w, h) = (b.max[0] - b.min[0], b.max[1] - b.min[1]);
    let scale = 800.0 / w.max(h);
    let px = |x: f64| (x - b.min[0]) * scale;
    let py = |y: f64| (b.max[1] - y) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{:.2}" height="{:.2}" fill="white" stroke="black"/>"#, w * scale, h * scale);
    let shape = |s: &mut String, sh: &Shape, style: &str| match *sh {
        Shape::Rect { min, max } => {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
                px(min[0]),
                py(max[1]),
                (max[0] - min[0]) * scale,
                (max[1] - min[1]) * scale
            );
        }
        Shape::Circle { center, radius } => {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" {style}/>"#,
                px(center[0]),
                py(center[1]),
                radius * scale
            );
        }
    };
    for o in &workspace.obstacles {
        shape(&mut s, o, r##"fill="#555555""##);
    }
    shape(&mut s, &workspace.target, r##"fill="#74c476" fill-opacity="0.6""##);
    for r in records {
        for pair in r.trace.windows(2) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"/>"#,
                px(pair[0].x),
                py(pair[0].y),
                px(pair[1].x),
                py(pair[1].y),
                status_color(pair[1].status)
            );
        }
    }
    for wp in waypoints {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#08519c"/>"##, px(wp[0]), py(wp[1]));
    }
    s.push_str("</svg>\n");
    s
}
