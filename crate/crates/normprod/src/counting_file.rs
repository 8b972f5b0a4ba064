//! Counting numbers stored as JSON:
//!
//! ```json
//! {"c_alpha": [1.0, 1.0], "c_i": [0.0, -1.0, 0.0],
//!  "c_i_alpha": [[[0, 0], 0.0], [[1, 0], 0.0], [[1, 1], 0.0], [[2, 1], 0.0]]}
//! ```
//!
//! `c_i_alpha` lists `[[variable, factor], value]` pairs and must name every
//! incidence of the model exactly once.

use normprod_core::counting::{CountingError, CountingNumbers};
use normprod_core::model::Model;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CountingFileError {
    #[error("counting file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("counting file has {got} {what} entries, the model needs {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("c_i_alpha names ({var}, {factor}), which is not an incidence of the model")]
    NotAnIncidence { var: usize, factor: usize },
    #[error("c_i_alpha gives ({var}, {factor}) more than once")]
    Duplicate { var: usize, factor: usize },
    #[error("c_i_alpha has no value for ({var}, {factor})")]
    Missing { var: usize, factor: usize },
    #[error(transparent)]
    Counting(#[from] CountingError),
}

#[derive(Serialize, Deserialize)]
struct CountingFile {
    c_alpha: Vec<f64>,
    c_i: Vec<f64>,
    c_i_alpha: Vec<((usize, usize), f64)>,
}

pub fn parse_counting(model: &Model, text: &str) -> Result<CountingNumbers, CountingFileError> {
    let file: CountingFile = serde_json::from_str(text)?;
    if file.c_alpha.len() != model.num_factors() {
        return Err(CountingFileError::Length {
            what: "c_alpha",
            got: file.c_alpha.len(),
            expected: model.num_factors(),
        });
    }
    if file.c_i.len() != model.num_vars() {
        return Err(CountingFileError::Length {
            what: "c_i",
            got: file.c_i.len(),
            expected: model.num_vars(),
        });
    }
    let mut c_i_alpha: Vec<Option<f64>> = vec![None; model.num_incidences()];
    for &((var, factor), value) in &file.c_i_alpha {
        let id = (var < model.num_vars())
            .then(|| {
                model
                    .incidences(var)
                    .iter()
                    .find(|inc| inc.factor == factor)
            })
            .flatten()
            .map(|inc| inc.id)
            .ok_or(CountingFileError::NotAnIncidence { var, factor })?;
        if c_i_alpha[id].replace(value).is_some() {
            return Err(CountingFileError::Duplicate { var, factor });
        }
    }
    let mut values = Vec::with_capacity(c_i_alpha.len());
    for var in 0..model.num_vars() {
        for inc in model.incidences(var) {
            if c_i_alpha[inc.id].is_none() {
                return Err(CountingFileError::Missing {
                    var,
                    factor: inc.factor,
                });
            }
        }
    }
    values.extend(c_i_alpha.into_iter().map(|v| v.unwrap_or(0.0)));
    Ok(CountingNumbers::new(model, file.c_alpha, file.c_i, values)?)
}

pub fn format_counting(model: &Model, counting: &CountingNumbers) -> String {
    let mut c_i_alpha = Vec::with_capacity(model.num_incidences());
    for var in 0..model.num_vars() {
        for inc in model.incidences(var) {
            c_i_alpha.push(((var, inc.factor), counting.c_i_alpha()[inc.id]));
        }
    }
    let file = CountingFile {
        c_alpha: counting.c_alpha().to_vec(),
        c_i: counting.c_i().to_vec(),
        c_i_alpha,
    };
    let mut text = serde_json::to_string(&file).unwrap_or_default();
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use normprod_core::counting::bethe;
    use normprod_core::model::Factor;

    fn chain() -> Model {
        Model::new(
            vec![2, 2, 2],
            vec![vec![0.0; 2]; 3],
            vec![
                Factor::new(vec![0, 1], vec![0.0; 4]),
                Factor::new(vec![1, 2], vec![0.0; 4]),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn parse_example() {
        let m = chain();
        let text = r#"{"c_alpha": [1.0, 1.0], "c_i": [0.0, -1.0, 0.0],
            "c_i_alpha": [[[0, 0], 0.0], [[1, 0], 0.0], [[1, 1], 0.0], [[2, 1], 0.0]]}"#;
        let c = parse_counting(&m, text).unwrap();
        assert_eq!(c.c_i(), bethe(&m).c_i());
        assert_eq!(c.hat_c_i(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn round_trip() {
        let m = chain();
        let c = bethe(&m);
        let back = parse_counting(&m, &format_counting(&m, &c)).unwrap();
        assert_eq!(back.c_alpha(), c.c_alpha());
        assert_eq!(back.c_i(), c.c_i());
        assert_eq!(back.c_i_alpha(), c.c_i_alpha());
    }

    #[test]
    fn coverage_errors() {
        let m = chain();
        let base = r#"{"c_alpha": [1, 1], "c_i": [0, -1, 0], "c_i_alpha": "#;
        let missing = format!("{base}[[[0, 0], 0], [[1, 0], 0], [[1, 1], 0]]}}");
        assert!(matches!(
            parse_counting(&m, &missing),
            Err(CountingFileError::Missing { var: 2, factor: 1 })
        ));
        let dup =
            format!("{base}[[[0, 0], 0], [[0, 0], 0], [[1, 0], 0], [[1, 1], 0], [[2, 1], 0]]}}");
        assert!(matches!(
            parse_counting(&m, &dup),
            Err(CountingFileError::Duplicate { .. })
        ));
        let stray = format!("{base}[[[0, 1], 0]]}}");
        assert!(matches!(
            parse_counting(&m, &stray),
            Err(CountingFileError::NotAnIncidence { var: 0, factor: 1 })
        ));
        let short = r#"{"c_alpha": [1], "c_i": [0, -1, 0], "c_i_alpha": []}"#;
        assert!(matches!(
            parse_counting(&m, short),
            Err(CountingFileError::Length { .. })
        ));
        assert!(matches!(
            parse_counting(&m, "{"),
            Err(CountingFileError::Json(_))
        ));
    }
}
