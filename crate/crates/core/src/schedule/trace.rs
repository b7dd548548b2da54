use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abstraction::BOOT_TOL;

/// Status command of the localization module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocAction {
    Start,
    Boot,
    On,
    Off,
}

impl fmt::Display for LocAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocAction::Start => "start",
            LocAction::Boot => "boot",
            LocAction::On => "on",
            LocAction::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    /// Decision time `tᵢ`, s.
    pub time: f64,
    pub action: LocAction,
}

/// Actions applied at the waypoint times `t₀, t₁, …`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimedActionTrace {
    pub actions: Vec<TimedAction>,
    /// `t_|φ|`, when the mission reached the last waypoint.
    pub end: Option<f64>,
}

impl TimedActionTrace {
    pub fn push(&mut self, time: f64, action: LocAction) {
        self.actions.push(TimedAction { time, action });
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A broken feasibility rule, located by the index of the offending action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptyTrace,
    FirstAction { found: LocAction },
    StartNotAfterOff { index: usize },
    BootNotAfterStart { index: usize },
    OnNotAfterBoot { index: usize },
    /// A boot started at `start` is still running at `index` but the action
    /// there is not `boot`.
    BootCut { start: usize, index: usize },
    OffDuringBoot { start: usize, index: usize },
    UncompletableBoot { start: usize },
    NonMonotoneTime { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EmptyTrace => write!(f, "trace is empty"),
            Violation::FirstAction { found } => write!(f, "first action is {found}, expected on or off"),
            Violation::StartNotAfterOff { index } => write!(f, "start at {index} is not preceded by off"),
            Violation::BootNotAfterStart { index } => write!(f, "boot at {index} is not preceded by start or boot"),
            Violation::OnNotAfterBoot { index } => write!(f, "on at {index} is not preceded by boot or on"),
            Violation::BootCut { start, index } => {
                write!(f, "boot started at {start} is still running at {index} but the action is not boot")
            }
            Violation::OffDuringBoot { start, index } => {
                write!(f, "off at {index} interrupts the boot started at {start}")
            }
            Violation::UncompletableBoot { start } => {
                write!(f, "boot started at {start} cannot complete before the last waypoint")
            }
            Violation::NonMonotoneTime { index } => write!(f, "time decreases at {index}"),
        }
    }
}

/// Checks the feasibility rules of a timed localization trace. Returns every
/// violation found; an empty list means the trace is feasible.
pub fn check_feasibility(trace: &TimedActionTrace, t_boot: f64) -> Vec<Violation> {
    use LocAction::*;
    let a = &trace.actions;
    let Some(first) = a.first() else {
        return vec![Violation::EmptyTrace];
    };
    let mut out = Vec::new();
    if !matches!(first.action, On | Off) {
        out.push(Violation::FirstAction { found: first.action });
    }
    for k in 1..a.len() {
        if a[k].time < a[k - 1].time {
            out.push(Violation::NonMonotoneTime { index: k });
        }
        let prev = a[k - 1].action;
        match a[k].action {
            Start if prev != Off => out.push(Violation::StartNotAfterOff { index: k }),
            Boot if !matches!(prev, Start | Boot) => out.push(Violation::BootNotAfterStart { index: k }),
            On if !matches!(prev, Boot | On) => out.push(Violation::OnNotAfterBoot { index: k }),
            _ => {}
        }
    }
    for (s, start) in a.iter().enumerate().filter(|(_, x)| x.action == Start) {
        let mut k = s + 1;
        while k < a.len() && a[k].time - start.time < t_boot - BOOT_TOL {
            match a[k].action {
                Boot => {}
                Off => out.push(Violation::OffDuringBoot { start: s, index: k }),
                _ => out.push(Violation::BootCut { start: s, index: k }),
            }
            k += 1;
        }
        if let Some(end) = trace.end {
            if end - start.time <= t_boot + BOOT_TOL {
                out.push(Violation::UncompletableBoot { start: s });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use LocAction::*;

    fn trace(times: &[f64], acts: &[LocAction], end: Option<f64>) -> TimedActionTrace {
        TimedActionTrace {
            actions: times.iter().zip(acts).map(|(&time, &action)| TimedAction { time, action }).collect(),
            end,
        }
    }

    #[test]
    fn always_on_is_feasible() {
        let t = trace(&[0.0, 1.0, 2.0, 3.0], &[On; 4], Some(4.0));
        assert!(check_feasibility(&t, 5.0).is_empty());
    }

    #[test]
    fn boot_first_is_rejected() {
        let t = trace(&[0.0, 1.0], &[Boot, On], Some(2.0));
        let v = check_feasibility(&t, 5.0);
        assert!(v.contains(&Violation::FirstAction { found: Boot }));
    }

    #[test]
    fn full_boot_sequence_is_feasible() {
        // Δt = 1 s, T_boot = 2.5 s: start at t₁, then ⌈T_boot/Δt⌉ boot points and on.
        let boots = (2.5f64 / 1.0).ceil() as usize;
        let mut acts = vec![Off, Start];
        acts.extend(std::iter::repeat_n(Boot, boots));
        acts.push(On);
        let times: Vec<f64> = (0..acts.len()).map(|k| k as f64).collect();
        let t = trace(&times, &acts, Some(acts.len() as f64));
        assert_eq!(check_feasibility(&t, 2.5), vec![]);
    }

    #[test]
    fn boot_length_is_enforced() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let short = trace(&times, &[Off, Start, Boot, On, On, On], Some(6.0));
        assert_eq!(check_feasibility(&short, 2.5), vec![Violation::BootCut { start: 1, index: 3 }]);
        // Extra boot points after completion are not excluded by the rules.
        let long = trace(&times, &[Off, Start, Boot, Boot, Boot, On], Some(6.0));
        assert!(check_feasibility(&long, 2.5).is_empty());
        let off = trace(&times, &[Off, Start, Boot, Off, Off, Off], Some(6.0));
        assert_eq!(check_feasibility(&off, 2.5), vec![Violation::OffDuringBoot { start: 1, index: 3 }]);
    }

    #[test]
    fn exact_boot_time_completes_at_the_point() {
        // t₃ − t₁ = T_boot exactly: boot only at t₂.
        let t = trace(&[0.0, 1.0, 2.0, 3.0], &[Off, Start, Boot, On], Some(4.0));
        assert!(check_feasibility(&t, 2.0).is_empty());
    }

    #[test]
    fn ordering_rules() {
        let t = trace(&[0.0, 1.0, 2.0, 3.0], &[On, Start, Off, On], Some(10.0));
        let v = check_feasibility(&t, 0.5);
        assert!(v.contains(&Violation::StartNotAfterOff { index: 1 }));
        assert!(v.contains(&Violation::OnNotAfterBoot { index: 3 }));
        let t = trace(&[0.0, 1.0], &[Off, Boot], None);
        assert!(check_feasibility(&t, 0.5).contains(&Violation::BootNotAfterStart { index: 1 }));
    }

    #[test]
    fn boot_must_finish_before_the_end() {
        let t = trace(&[0.0, 1.0, 2.0], &[Off, Start, Boot], Some(3.0));
        assert_eq!(check_feasibility(&t, 2.0), vec![Violation::UncompletableBoot { start: 1 }]);
        let t = trace(&[0.0, 1.0, 2.0], &[Off, Start, Boot], Some(3.5));
        assert!(check_feasibility(&t, 2.0).is_empty());
        assert_eq!(check_feasibility(&TimedActionTrace::default(), 1.0), vec![Violation::EmptyTrace]);
    }
}
