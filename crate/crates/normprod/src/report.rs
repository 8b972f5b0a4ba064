//! CSV writers and the `%.12g` number format shared by every output file.

use std::fmt::Write as _;

use normprod_core::engine::{BeliefSet, TraceRow};
use normprod_core::map_lp::MapResult;
use normprod_core::model::Model;
use normprod_core::oracle::ExactResult;

/// Format like C's `printf("%.12g", x)`; non-finite values print as
/// `inf`, `-inf` and `nan`.
pub fn g12(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    // Rounding to P significant digits decides the exponent, as in C.
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -4 || exp >= P {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn state_tuple(states: &[usize]) -> String {
    let parts: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    parts.join(" ")
}

/// Visit every `(flat index, state tuple)` of a table over `cards`.
fn for_each_state(cards: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let len: usize = cards.iter().product();
    let mut states = vec![0usize; cards.len()];
    for flat in 0..len {
        f(flat, &states);
        for k in (0..cards.len()).rev() {
            states[k] += 1;
            if states[k] < cards[k] {
                break;
            }
            states[k] = 0;
        }
    }
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("sweep,dual,primal,max_delta\n");
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.sweep,
            g12(row.dual),
            g12(row.primal),
            g12(row.max_delta)
        );
    }
    out
}

/// `kind,index,state_tuple,prob` with `kind` either `var` or `factor`.
/// Factor tables that are unavailable for the counting numbers are omitted.
pub fn beliefs_csv(model: &Model, beliefs: &BeliefSet) -> String {
    let mut out = String::from("kind,index,state_tuple,prob\n");
    for v in 0..model.num_vars() {
        for (x, p) in beliefs.b_i(v).into_iter().enumerate() {
            let _ = writeln!(out, "var,{v},{x},{}", g12(p));
        }
    }
    for (a, f) in model.factors().iter().enumerate() {
        if let Some(table) = beliefs.b_alpha(a) {
            for_each_state(f.cards(), |flat, states| {
                let _ = writeln!(
                    out,
                    "factor,{a},{},{}",
                    state_tuple(states),
                    g12(table[flat])
                );
            });
        }
    }
    out
}

/// The belief schema with a trailing `source` column set to `exact`.
pub fn exact_beliefs_csv(model: &Model, exact: &ExactResult) -> String {
    let mut out = String::from("kind,index,state_tuple,prob,source\n");
    for (v, table) in exact.marginals_i.iter().enumerate() {
        for (x, &p) in table.iter().enumerate() {
            let _ = writeln!(out, "var,{v},{x},{},exact", g12(p));
        }
    }
    for (a, f) in model.factors().iter().enumerate() {
        let table = &exact.marginals_alpha[a];
        for_each_state(f.cards(), |flat, states| {
            let _ = writeln!(
                out,
                "factor,{a},{},{},exact",
                state_tuple(states),
                g12(table[flat])
            );
        });
    }
    out
}

/// `var,state,tie` with `tie` as 0 or 1.
pub fn map_csv(result: &MapResult) -> String {
    assignment_csv(result.assignment.states(), &result.tie_flags)
}

pub fn assignment_csv(states: &[usize], ties: &[bool]) -> String {
    let mut out = String::from("var,state,tie\n");
    for (v, (&s, &t)) in states.iter().zip(ties).enumerate() {
        let _ = writeln!(out, "{v},{s},{}", u8::from(t));
    }
    out
}
