//! Explicit `.tra` / `.lab` text format.
//!
//! Transition files start with `<states> <transitions>` (DTMC, rows
//! `<src> <dst> <prob>`) or `<states> <choices> <transitions>` (MDP, rows
//! `<src> <choice> <dst> <prob> [<action>]`). Label files start with a line of
//! `<id>="<name>"` declarations followed by rows `<state>: <id> [<id>...]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{DeadlockPolicy, Distribution, ModelBuilder, ModelError, SparseModel, StateId};
use crate::num::Probability;

const INIT_LABEL: &str = "init";

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject deadlock states instead of self-looping them.
    pub strict: bool,
}

/// A loaded model and the deadlock states that were self-looped.
#[derive(Debug, Clone)]
pub struct Loaded<P> {
    pub model: SparseModel<P>,
    pub self_looped: Vec<StateId>,
}

/// Loads a model in lenient mode.
pub fn load_model<P: Probability>(tra: &str, lab: &str, goal_label: &str) -> Result<SparseModel<P>, ModelError> {
    load_model_with(tra, lab, goal_label, &LoadOptions::default()).map(|l| l.model)
}

pub fn load_model_with<P: Probability>(
    tra: &str,
    lab: &str,
    goal_label: &str,
    opts: &LoadOptions,
) -> Result<Loaded<P>, ModelError> {
    let (num_states, rows) = parse_tra::<P>(tra)?;
    let labels = parse_lab(lab, num_states)?;

    let mut builder = ModelBuilder::new(num_states);
    for ((src, choice), entries) in rows {
        let dist = Distribution::new(entries).map_err(|e| match e {
            ModelError::BadSum { sum, .. } => ModelError::BadSum { state: src, choice, sum },
            other => other,
        })?;
        builder.add_action(src, dist)?;
    }

    let goal = labels
        .get(goal_label)
        .ok_or_else(|| ModelError::UnknownLabel(goal_label.to_string()))?;
    for &s in goal {
        builder.set_goal(s, true)?;
    }
    if let Some(init) = labels.get(INIT_LABEL) {
        match init.as_slice() {
            [] => {}
            [s] => {
                builder.set_initial(*s)?;
            }
            [a, b, ..] => return Err(ModelError::MultipleInitial(*a, *b)),
        }
    }

    let policy = if opts.strict {
        DeadlockPolicy::Reject
    } else {
        DeadlockPolicy::SelfLoop
    };
    let (model, self_looped) = builder.build(policy)?;
    for s in &self_looped {
        log::warn!("state {s} has no outgoing transition; added a probability-1 self-loop");
    }
    Ok(Loaded { model, self_looped })
}

type Rows<P> = BTreeMap<(StateId, usize), Vec<(StateId, P)>>;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize, ModelError> {
    tok.parse().map_err(|_| ModelError::MalformedRow {
        line,
        msg: format!("invalid {what} `{tok}`"),
    })
}

fn parse_tra<P: Probability>(text: &str) -> Result<(usize, Rows<P>), ModelError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(ModelError::MalformedHeader {
        line: 1,
        msg: "missing header".into(),
    })?;
    let counts = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ModelError::MalformedHeader {
            line: hline,
            msg: format!("expected integers, got `{header}`"),
        })?;
    let (num_states, num_choices, num_transitions, is_mdp) = match counts.as_slice() {
        &[n, t] => (n, None, t, false),
        &[n, c, t] => (n, Some(c), t, true),
        _ => {
            return Err(ModelError::MalformedHeader {
                line: hline,
                msg: format!("expected 2 or 3 fields, got {}", counts.len()),
            })
        }
    };
    if num_states == 0 {
        return Err(ModelError::NoStates);
    }

    let mut rows: Rows<P> = BTreeMap::new();
    let mut seen = 0usize;
    for (line, text) in lines {
        let toks: Vec<&str> = text.split_whitespace().collect();
        let (src, choice, dst, prob) = match (is_mdp, toks.len()) {
            (false, 3) => (toks[0], "0", toks[1], toks[2]),
            (true, 4 | 5) => (toks[0], toks[1], toks[2], toks[3]),
            (false, 4 | 5) | (true, 3) => {
                return Err(ModelError::MixedRowWidths {
                    line,
                    found: toks.len(),
                    kind: if is_mdp { "MDP" } else { "DTMC" },
                })
            }
            (_, n) => {
                return Err(ModelError::MalformedRow {
                    line,
                    msg: format!("unexpected column count {n}"),
                })
            }
        };
        let src = parse_usize(src, line, "source state")?;
        let choice = parse_usize(choice, line, "choice index")?;
        let dst = parse_usize(dst, line, "target state")?;
        for s in [src, dst] {
            if s >= num_states {
                return Err(ModelError::StateOutOfRange { state: s, num_states });
            }
        }
        let p: P = prob.parse().map_err(|_| ModelError::MalformedRow {
            line,
            msg: format!("invalid probability `{prob}`"),
        })?;
        if !(p > P::zero() && p <= P::one()) {
            return Err(ModelError::ProbabilityOutOfRange {
                line: Some(line),
                value: p.to_f64().unwrap_or(f64::NAN),
            });
        }
        let entries = rows.entry((src, choice)).or_default();
        if entries.iter().any(|&(t, _)| t == dst) {
            return Err(ModelError::DuplicateTransition { src, choice, dst });
        }
        entries.push((dst, p));
        seen += 1;
    }

    if seen != num_transitions {
        return Err(ModelError::CountMismatch {
            what: "transitions",
            expected: num_transitions,
            found: seen,
        });
    }
    if let Some(c) = num_choices {
        if rows.len() != c {
            return Err(ModelError::CountMismatch {
                what: "choices",
                expected: c,
                found: rows.len(),
            });
        }
    }
    Ok((num_states, rows))
}

fn parse_lab(text: &str, num_states: usize) -> Result<BTreeMap<String, Vec<StateId>>, ModelError> {
    let mut lines = content_lines(text);
    let mut by_id: BTreeMap<usize, String> = BTreeMap::new();
    let mut labels: BTreeMap<String, Vec<StateId>> = BTreeMap::new();
    let Some((_, header)) = lines.next() else {
        return Ok(labels);
    };
    for decl in header.split_whitespace() {
        let (id, name) = decl
            .split_once('=')
            .ok_or_else(|| ModelError::MalformedLabels(format!("bad declaration `{decl}`")))?;
        let id: usize = id
            .parse()
            .map_err(|_| ModelError::MalformedLabels(format!("bad label id `{id}`")))?;
        let name = name
            .strip_prefix('"')
            .and_then(|n| n.strip_suffix('"'))
            .ok_or_else(|| ModelError::MalformedLabels(format!("unquoted label name in `{decl}`")))?;
        by_id.insert(id, name.to_string());
        labels.entry(name.to_string()).or_default();
    }
    for (line, row) in lines {
        let (state, ids) = row
            .split_once(':')
            .ok_or_else(|| ModelError::MalformedLabels(format!("line {line}: expected `<state>: <ids>`")))?;
        let state = parse_usize(state.trim(), line, "state")?;
        if state >= num_states {
            return Err(ModelError::StateOutOfRange { state, num_states });
        }
        for id in ids.split_whitespace() {
            let id = parse_usize(id, line, "label id")?;
            let name = by_id
                .get(&id)
                .ok_or_else(|| ModelError::MalformedLabels(format!("line {line}: undeclared label id {id}")))?;
            labels.get_mut(name).expect("declared").push(state);
        }
    }
    for states in labels.values_mut() {
        states.sort_unstable();
        states.dedup();
    }
    Ok(labels)
}

/// Writes canonical `.tra` / `.lab` text with the goal label named `goal`.
pub fn write_model<P: Probability>(model: &SparseModel<P>) -> (String, String) {
    write_model_labeled(model, "goal")
}

/// Writes canonical text: rows sorted by source, choice, target.
///
/// Models with one action per state are written in DTMC form.
pub fn write_model_labeled<P: Probability>(model: &SparseModel<P>, goal_label: &str) -> (String, String) {
    let mut tra = String::new();
    let dtmc = model.is_dtmc();
    if dtmc {
        writeln!(tra, "{} {}", model.num_states(), model.num_transitions()).unwrap();
    } else {
        writeln!(
            tra,
            "{} {} {}",
            model.num_states(),
            model.num_actions(),
            model.num_transitions()
        )
        .unwrap();
    }
    for s in 0..model.num_states() {
        for (choice, a) in model.actions(s).enumerate() {
            for (t, p) in model.entries(a) {
                if dtmc {
                    writeln!(tra, "{s} {t} {p:?}").unwrap();
                } else {
                    writeln!(tra, "{s} {choice} {t} {p:?}").unwrap();
                }
            }
        }
    }

    let mut lab = String::new();
    writeln!(lab, "0=\"{INIT_LABEL}\" 1=\"{goal_label}\"").unwrap();
    for s in 0..model.num_states() {
        let init = s == model.initial();
        let goal = model.is_goal(s);
        match (init, goal) {
            (true, true) => writeln!(lab, "{s}: 0 1").unwrap(),
            (true, false) => writeln!(lab, "{s}: 0").unwrap(),
            (false, true) => writeln!(lab, "{s}: 1").unwrap(),
            (false, false) => {}
        }
    }
    (tra, lab)
}
