use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::Result;

pub const PARTIAL_CONVERGENCE: &str = "partial_convergence";
pub const FLAG_NOT_STABILIZED: &str = "flag_not_stabilized";
pub const PERIODIC_SURROGATE: &str = "periodic_surrogate";
pub const NO_TANGENT_GENERATOR: &str = "no_tangent_generator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Warning {
            code: code.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub command: String,
    pub spec_digest: String,
    pub parameters: Value,
    pub results: Value,
    pub warnings: Vec<Warning>,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    /// 0 on success, 3 when a solver stopped early.
    pub fn exit_code(&self) -> i32 {
        if self.warnings.iter().any(|w| w.code == PARTIAL_CONVERGENCE) {
            3
        } else {
            0
        }
    }

    pub fn strip_timings(&mut self) {
        self.timings.clear();
    }

    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.strip_timings();
        r
    }

    /// Pretty JSON with every float in `{:.16e}` form; non-finite values become `null`.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, FloatFormatter::default());
        self.serialize(&mut ser).expect("in-memory serialization");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Default)]
struct FloatFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for FloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}
