//! JSON file formats and number formatting shared by the command-line tool.
//!
//! Floats are written with 17 significant digits so that a value read back
//! is bit-identical. Fields that may be non-finite go through [`Real`], which
//! writes the strings `"+inf"`, `"-inf"` and `"nan"` instead of `null`.

use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::discretization::{DensityGraphon, DensityMeasure};
use crate::error::{Error, Result};
use crate::graphon::{StepGraphon, WeightedGraph};
use crate::measure::{FiniteMeasure, MeasureKind, Metric, Point, WeightSpace};
use crate::rate::Direction;
use crate::sampling::EventSpec;

/// `x` with 17 significant digits (`inf`, `-inf`, `nan` otherwise).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// An `f64` that serializes non-finite values as strings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Real(x)),
            Raw::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                "nan" => Ok(Real(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

struct Digits17;

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFile {
    #[default]
    Discrete,
    AbsoluteDifference,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub points: Vec<Point>,
    #[serde(default)]
    pub metric: MetricFile,
    /// Defaults to the point `0` when present, else the first point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_index: Option<usize>,
}

impl SpaceFile {
    pub fn build(&self) -> Result<Arc<WeightSpace<f64>>> {
        let zero = self
            .zero_index
            .unwrap_or_else(|| self.points.iter().position(|p| *p == Point::Real(0.0)).unwrap_or(0));
        let space = match &self.metric {
            MetricFile::Discrete => WeightSpace::discrete(self.points.clone(), zero)?,
            MetricFile::Matrix(m) => WeightSpace::with_matrix(self.points.clone(), m.clone(), zero)?,
            MetricFile::AbsoluteDifference => {
                let values = self
                    .points
                    .iter()
                    .map(|p| match p {
                        Point::Real(x) => Ok(*x),
                        Point::Label(l) => Err(Error::InvalidSpace(format!("label {l:?} on an absolute-difference space"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                WeightSpace::real_points(&values, zero)?
            }
        };
        Ok(Arc::new(space))
    }

    pub fn of(space: &WeightSpace<f64>) -> Self {
        let metric = match space.metric() {
            Metric::Discrete => MetricFile::Discrete,
            Metric::AbsoluteDifference => MetricFile::AbsoluteDifference,
            Metric::Matrix(_) => MetricFile::Matrix(space.dist_matrix()),
        };
        Self { points: space.points().to_vec(), metric, zero_index: Some(space.zero_index()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub space: SpaceFile,
    pub weights: Vec<f64>,
    #[serde(default = "probability")]
    pub kind: MeasureKind,
}

fn probability() -> MeasureKind {
    MeasureKind::Probability
}

impl MeasureFile {
    pub fn build(&self) -> Result<FiniteMeasure<f64>> {
        FiniteMeasure::new(self.space.build()?, self.weights.clone(), self.kind)
    }

    pub fn of(m: &FiniteMeasure<f64>) -> Self {
        Self { space: SpaceFile::of(m.space()), weights: m.weights().to_vec(), kind: m.kind() }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphonFile {
    pub space: SpaceFile,
    pub n: usize,
    #[serde(default = "yes")]
    pub symmetric: bool,
    /// Row-major blocks, each a probability vector over the points.
    pub cells: Vec<Vec<f64>>,
}

impl GraphonFile {
    pub fn build(&self) -> Result<StepGraphon<f64>> {
        self.build_on(self.space.build()?)
    }

    /// Builds on an already constructed space (so several files can share it).
    pub fn build_on(&self, space: Arc<WeightSpace<f64>>) -> Result<StepGraphon<f64>> {
        let k = space.len();
        if let Some(bad) = self.cells.iter().find(|c| c.len() != k) {
            return Err(Error::Dimension { expected: k, got: bad.len() });
        }
        StepGraphon::from_weights(space, self.n, self.cells.concat(), self.symmetric)
    }

    pub fn of(w: &StepGraphon<f64>) -> Self {
        Self {
            space: SpaceFile::of(w.space()),
            n: w.n(),
            symmetric: w.is_symmetric(),
            cells: w.weights().chunks(w.space().len()).map(<[f64]>::to_vec).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub space: SpaceFile,
    pub n: usize,
    /// Point indices of the upper triangle, row by row.
    pub upper: Vec<usize>,
}

impl GraphFile {
    pub fn build(&self) -> Result<WeightedGraph<f64>> {
        WeightedGraph::from_upper(self.space.build()?, self.n, &self.upper)
    }

    pub fn of(g: &WeightedGraph<f64>) -> Self {
        Self { space: SpaceFile::of(g.space()), n: g.n(), upper: g.upper() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGraphonFile {
    pub n: usize,
    #[serde(default = "yes")]
    pub symmetric: bool,
    pub cells: Vec<DensityMeasure>,
}

impl DensityGraphonFile {
    pub fn build(&self) -> Result<DensityGraphon> {
        let cells = self.cells.iter().cloned().map(DensityMeasure::validated).collect::<Result<Vec<_>>>()?;
        DensityGraphon::new(self.n, cells, self.symmetric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventFile {
    MeanFunctional { f: Vec<f64>, direction: Direction, threshold: f64 },
    DeltaBall { center: GraphonFile, radius: f64 },
}

impl EventFile {
    pub fn build(&self) -> Result<EventSpec> {
        match self {
            EventFile::MeanFunctional { f, direction, threshold } => EventSpec::mean(f.clone(), *direction, *threshold),
            EventFile::DeltaBall { center, radius } => EventSpec::ball(center.build()?, *radius),
        }
    }
}
