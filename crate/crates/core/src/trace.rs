//! Reduction traces and their JSON-lines form.
//!
//! The first line is a header carrying the initial program, the region
//! depths, the relation and the strategy; each further line is one step.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::parse::{parse_term, parse_type};
use crate::reduce::{Relation, Rule, Strategy};
use crate::syntax::{Address, RegionContext, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub step: u64,
    pub rule: Rule,
    pub address: Address,
    pub depth: usize,
    pub store: Option<Address>,
    /// Program after the step.
    pub program: Term,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub initial: Term,
    pub regions: RegionContext,
    pub relation: Relation,
    pub strategy: Strategy,
    pub steps: Vec<TraceStep>,
}

#[derive(thiserror::Error, Debug)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("empty trace")]
    Empty,
}

#[derive(Serialize, Deserialize)]
struct RegionLine {
    depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r#type: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    initial: String,
    regions: BTreeMap<String, RegionLine>,
    relation: Relation,
    strategy: String,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    step: u64,
    rule: Rule,
    address: String,
    depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    store: Option<String>,
    program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn addr_string(a: &Address) -> String {
    a.0.iter().map(|b| char::from(b'0' + b)).collect()
}

impl Trace {
    pub fn new(initial: Term, regions: RegionContext, relation: Relation, strategy: Strategy) -> Self {
        Trace { initial, regions, relation, strategy, steps: Vec::new() }
    }

    /// Program after the last step.
    pub fn last_program(&self) -> &Term {
        self.steps.last().map_or(&self.initial, |s| &s.program)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), TraceError> {
        let header = HeaderLine {
            initial: self.initial.to_string(),
            regions: self
                .regions
                .iter()
                .map(|(r, info)| {
                    (r.to_string(), RegionLine { depth: info.depth, r#type: info.ty.as_ref().map(|t| t.to_string()) })
                })
                .collect(),
            relation: self.relation,
            strategy: match self.strategy {
                Strategy::Random(_) => "random".into(),
                s => s.to_string(),
            },
            seed: self.strategy.seed(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("serializable"))?;
        for s in &self.steps {
            let line = StepLine {
                step: s.step,
                rule: s.rule,
                address: addr_string(&s.address),
                depth: s.depth,
                store: s.store.as_ref().map(addr_string),
                program: s.program.to_string(),
                seed: s.seed,
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("serializable"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let fmt_err = |line: usize, message: String| TraceError::Format { line: line + 1, message };
        let (n, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: HeaderLine = serde_json::from_str(&first?).map_err(|e| fmt_err(n, e.to_string()))?;
        let initial = parse_term(&header.initial).map_err(|e| fmt_err(n, e.to_string()))?;
        let mut regions = RegionContext::new();
        for (r, info) in header.regions {
            let ty = match info.r#type {
                Some(t) => Some(parse_type(&t).map_err(|e| fmt_err(n, e.to_string()))?),
                None => None,
            };
            regions.insert(r.as_str().into(), info.depth, ty);
        }
        let strategy = Strategy::parse(&header.strategy, header.seed.unwrap_or(0)).map_err(|e| fmt_err(n, e))?;
        let mut trace = Trace::new(initial, regions, header.relation, strategy);
        for (n, line) in lines {
            let s: StepLine = serde_json::from_str(&line?).map_err(|e| fmt_err(n, e.to_string()))?;
            trace.steps.push(TraceStep {
                step: s.step,
                rule: s.rule,
                address: s.address.parse().map_err(|e| fmt_err(n, e))?,
                depth: s.depth,
                store: s.store.map(|a| a.parse()).transpose().map_err(|e| fmt_err(n, e))?,
                program: parse_term(&s.program).map_err(|e| fmt_err(n, e.to_string()))?,
                seed: s.seed,
            });
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs;
    use crate::reduce::run;
    use crate::syntax::struct_equiv;

    #[test]
    fn jsonl_roundtrip() {
        let rc = RegionContext::from_depths([("r", 0)]);
        let r = run(&programs::apply_stored(), Relation::OuterBang, Strategy::Random(11), &rc, 100).unwrap();
        let text = r.trace.to_jsonl();
        assert_eq!(text.lines().count(), r.trace.steps.len() + 1);
        let back = Trace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.strategy, Strategy::Random(11));
        assert_eq!(back.steps.len(), r.trace.steps.len());
        for (a, b) in back.steps.iter().zip(&r.trace.steps) {
            assert_eq!((a.rule, &a.address, &a.store), (b.rule, &b.address, &b.store));
            assert!(struct_equiv(&a.program, &b.program));
        }
    }
}
