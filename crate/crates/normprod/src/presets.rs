//! Named counting-number settings and solver descriptions used by the CLI and
//! the experiment harness.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use normprod_core::counting::{self, CountingNumbers, L2Options};
use normprod_core::model::Model;

use crate::counting_file;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Bethe,
    /// Uniform spanning-tree TRW converted into the convex class.
    Trw,
    /// Plain tree-reweighted setting `c_α = ρ_α`, `c_i = 1 − Σ ρ`.
    Trbp,
    L2,
    Trivial,
    Nmplp,
    File(PathBuf),
}

impl Preset {
    pub fn build(&self, model: &Model) -> Result<CountingNumbers, Error> {
        Ok(match self {
            Preset::Bethe => counting::bethe(model),
            Preset::Trw => counting::trw_convex(model)?,
            Preset::Trbp => {
                let rho = counting::spanning_tree_edge_probabilities(model)?;
                counting::trw_from_edge_probabilities(model, &rho)?
            }
            Preset::L2 => counting::l2_convex(model, &L2Options::default())?.0,
            Preset::Trivial => counting::trivial_convex(model),
            Preset::Nmplp => counting::nmplp(model)?,
            Preset::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
                counting_file::parse_counting(model, &text)?
            }
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "bethe" => Preset::Bethe,
            "trw" => Preset::Trw,
            "trbp" => Preset::Trbp,
            "l2" => Preset::L2,
            "trivial" => Preset::Trivial,
            "nmplp" => Preset::Nmplp,
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Preset::File(PathBuf::from(path)),
                _ => {
                    return Err(format!(
                        "unknown counting preset {s:?} (expected bethe, trw, trbp, l2, trivial, nmplp or file:PATH)"
                    ))
                }
            },
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Bethe => f.write_str("bethe"),
            Preset::Trw => f.write_str("trw"),
            Preset::Trbp => f.write_str("trbp"),
            Preset::L2 => f.write_str("l2"),
            Preset::Trivial => f.write_str("trivial"),
            Preset::Nmplp => f.write_str("nmplp"),
            Preset::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Fixed temperature; `None` takes the experiment kind's default.
    Epsilon(Option<f64>),
    Anneal,
}

/// One solver column of an experiment: `PRESET`, `PRESET@EPS`,
/// `PRESET@anneal`, or one of the aliases `max-product` (`bethe@0`),
/// `max-trbp` (`trbp@0`) and `convex-max-product` (`trw@0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub label: String,
    pub preset: Preset,
    pub mode: Mode,
}

impl FromStr for SolverSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let label = s.to_string();
        let (preset, mode) = match s {
            "max-product" => (Preset::Bethe, Mode::Epsilon(Some(0.0))),
            "max-trbp" => (Preset::Trbp, Mode::Epsilon(Some(0.0))),
            "convex-max-product" => (Preset::Trw, Mode::Epsilon(Some(0.0))),
            _ => match s.split_once('@') {
                None => (s.parse()?, Mode::Epsilon(None)),
                Some((p, "anneal")) => (p.parse()?, Mode::Anneal),
                Some((p, e)) => {
                    let eps: f64 = e
                        .parse()
                        .map_err(|_| format!("bad temperature in solver {s:?}"))?;
                    if !(eps >= 0.0 && eps.is_finite()) {
                        return Err(format!(
                            "temperature in solver {s:?} must be finite and >= 0"
                        ));
                    }
                    (p.parse()?, Mode::Epsilon(Some(eps)))
                }
            },
        };
        Ok(SolverSpec {
            label,
            preset,
            mode,
        })
    }
}
