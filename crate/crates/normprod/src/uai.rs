//! Reading and writing the UAI `MARKOV` text format.
//!
//! Tables are linear-domain and row-major in the scope order given in the
//! file. Unary tables are folded into the local potentials, and tables whose
//! scopes name the same variable set are multiplied together.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use normprod_core::model::{Factor, Model, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UaiError {
    #[error("malformed UAI file: {0}")]
    Malformed(String),
    #[error("table {table} has {got} values, expected {expected}")]
    TableLength {
        table: usize,
        got: usize,
        expected: usize,
    },
    #[error("table {table} entry {entry} is negative or not a number ({value})")]
    NegativeValue {
        table: usize,
        entry: usize,
        value: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Tokens<'a> {
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, UaiError> {
        self.inner.next().ok_or_else(|| {
            UaiError::Malformed(format!("unexpected end of input while reading {what}"))
        })
    }

    fn usize(&mut self, what: &str) -> Result<usize, UaiError> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| {
            UaiError::Malformed(format!("expected an integer for {what}, found {tok:?}"))
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64, UaiError> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| {
            UaiError::Malformed(format!("expected a number for {what}, found {tok:?}"))
        })
    }
}

/// Parse a `MARKOV` network. `strict` is passed to [`Model::new`].
pub fn read_uai(text: &str, strict: bool) -> Result<Model, UaiError> {
    let mut t = Tokens {
        inner: text.split_whitespace(),
    };
    let kind = t.next("network type")?;
    if !kind.eq_ignore_ascii_case("MARKOV") {
        return Err(UaiError::Malformed(format!(
            "unsupported network type {kind:?}"
        )));
    }
    let n = t.usize("variable count")?;
    let mut cards = Vec::with_capacity(n);
    for v in 0..n {
        let c = t.usize("cardinality")?;
        if c == 0 {
            return Err(UaiError::Malformed(format!(
                "variable {v} has cardinality 0"
            )));
        }
        cards.push(c);
    }
    let num_tables = t.usize("table count")?;
    let mut scopes = Vec::with_capacity(num_tables);
    for k in 0..num_tables {
        let arity = t.usize("scope size")?;
        if arity == 0 {
            return Err(UaiError::Malformed(format!("table {k} has an empty scope")));
        }
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let v = t.usize("scope variable")?;
            if v >= n {
                return Err(UaiError::Malformed(format!(
                    "table {k} names variable {v} but there are {n}"
                )));
            }
            if scope.contains(&v) {
                return Err(UaiError::Malformed(format!(
                    "table {k} repeats variable {v}"
                )));
            }
            scope.push(v);
        }
        scopes.push(scope);
    }

    let mut log_phi: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    // Sorted scope -> accumulated log table in sorted layout; BTreeMap keeps
    // factor order deterministic (first appearance order is tracked separately).
    let mut merged: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    let mut order: Vec<Vec<usize>> = Vec::new();
    for (k, scope) in scopes.iter().enumerate() {
        let count = t.usize("table size")?;
        let expected: usize = scope.iter().map(|&v| cards[v]).product();
        if count != expected {
            return Err(UaiError::TableLength {
                table: k,
                got: count,
                expected,
            });
        }
        let mut table = Vec::with_capacity(count);
        for entry in 0..count {
            let value = t.f64("table entry")?;
            if !(value >= 0.0) || value.is_infinite() {
                return Err(UaiError::NegativeValue {
                    table: k,
                    entry,
                    value,
                });
            }
            table.push(value.ln());
        }
        if scope.len() == 1 {
            for (p, v) in log_phi[scope[0]].iter_mut().zip(&table) {
                *p += v;
            }
            continue;
        }
        let factor = Factor::from_unsorted(scope, &table, &cards);
        let key = factor.scope().to_vec();
        match merged.get_mut(&key) {
            Some(acc) => {
                for (a, v) in acc.iter_mut().zip(factor.log_psi()) {
                    *a += v;
                }
            }
            None => {
                order.push(key.clone());
                merged.insert(key, factor.log_psi().to_vec());
            }
        }
    }
    if let Some(extra) = t.inner.next() {
        return Err(UaiError::Malformed(format!(
            "trailing content starting at {extra:?}"
        )));
    }
    let factors = order
        .into_iter()
        .map(|scope| {
            let table = merged.remove(&scope).unwrap_or_default();
            Factor::new(scope, table)
        })
        .collect();
    Ok(Model::new(cards, log_phi, factors, strict)?)
}

/// Serialize a model. Every variable gets a unary table, followed by the
/// factors in model order. Values are written in shortest round-trip form.
pub fn write_uai(model: &Model) -> String {
    let mut out = String::new();
    let n = model.num_vars();
    out.push_str("MARKOV\n");
    let _ = writeln!(out, "{n}");
    let cards: Vec<String> = model.cards().iter().map(|c| c.to_string()).collect();
    let _ = writeln!(out, "{}", cards.join(" "));
    let _ = writeln!(out, "{}", n + model.num_factors());
    for v in 0..n {
        let _ = writeln!(out, "1 {v}");
    }
    for f in model.factors() {
        let scope: Vec<String> = f.scope().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{} {}", f.arity(), scope.join(" "));
    }
    let mut table = |values: &[f64]| {
        out.push('\n');
        let _ = writeln!(out, "{}", values.len());
        let text: Vec<String> = values.iter().map(|&l| format!("{:?}", l.exp())).collect();
        let _ = writeln!(out, " {}", text.join(" "));
    };
    for v in 0..n {
        table(model.log_phi(v));
    }
    for f in model.factors() {
        table(f.log_psi());
    }
    out
}
