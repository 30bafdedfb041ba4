//! Synthetic sensor-observation streams with a scheduled type mix.
//!
//! Every observation event is three triples:
//!
//! ```text
//! <sensor/k> ssn:hasValue <obs/n> .
//! <obs/n>    rdf:type     cuahsi:<type> .
//! <obs/n>    qudt:numericValue "v"^^xsd:double .
//! ```
//!
//! The event's topic is its observation type. Within each micro-batch the
//! per-type event counts follow the active segment's fractions to within one
//! event (largest-remainder apportionment).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rdf::{Term, TimedTriple, Triple, RDF_TYPE, XSD_DOUBLE};

pub const SSN_HAS_VALUE: &str = "http://purl.oclc.org/NET/ssnx/ssn/hasValue";
pub const QUDT_NUMERIC_VALUE: &str = "http://qudt.org/schema/qudt#numericValue";
pub const CUAHSI_NS: &str = "http://www.cuahsi.org/waterML/";
pub const SENSOR_NS: &str = "http://example.org/sensor/";
pub const OBSERVATION_NS: &str = "http://example.org/obs/";
pub const TRIPLES_PER_EVENT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("schedule has no segments")]
    Empty,
    #[error("first segment must start at window 0, found {0}")]
    FirstStart(u64),
    #[error("segment start {0} does not follow the previous start")]
    NotIncreasing(u64),
    #[error("fractions of segment at window {start} sum to {sum}")]
    BadSum { start: u64, sum: f64 },
    #[error("invalid observation type {0:?}")]
    BadType(String),
    #[error("invalid fraction {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSegment {
    pub start_window: u64,
    pub proportions: BTreeMap<String, f64>,
}

/// Piecewise-constant observation-type mix over window indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSchedule {
    segments: Vec<MixSegment>,
}

fn valid_type_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl MixSchedule {
    pub fn new(segments: Vec<MixSegment>) -> Result<Self, ScheduleError> {
        let first = segments.first().ok_or(ScheduleError::Empty)?;
        if first.start_window != 0 {
            return Err(ScheduleError::FirstStart(first.start_window));
        }
        for pair in segments.windows(2) {
            if pair[1].start_window <= pair[0].start_window {
                return Err(ScheduleError::NotIncreasing(pair[1].start_window));
            }
        }
        for seg in &segments {
            for (name, &f) in &seg.proportions {
                if !valid_type_name(name) {
                    return Err(ScheduleError::BadType(name.clone()));
                }
                if !(0.0..=1.0).contains(&f) {
                    return Err(ScheduleError::BadFraction(f));
                }
            }
            let sum: f64 = seg.proportions.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ScheduleError::BadSum { start: seg.start_window, sum });
            }
        }
        Ok(MixSchedule { segments })
    }

    /// A single segment with one type at fraction 1.
    pub fn constant(kind: &str) -> Result<Self, ScheduleError> {
        Self::new(vec![MixSegment {
            start_window: 0,
            proportions: BTreeMap::from([(kind.to_string(), 1.0)]),
        }])
    }

    /// Parses lines of `segment <start-window> <type>=<fraction>[,...]`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ScheduleError> {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: &str| ScheduleError::Syntax { line: i + 1, reason: reason.into() };
            let mut parts = line.split_whitespace();
            if parts.next() != Some("segment") {
                return Err(syntax("expected 'segment'"));
            }
            let start: u64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| syntax("expected start window index"))?;
            let mix = parts.next().ok_or_else(|| syntax("expected type fractions"))?;
            if parts.next().is_some() {
                return Err(syntax("unexpected trailing tokens"));
            }
            let mut proportions = BTreeMap::new();
            for item in mix.split(',') {
                let (name, frac) = item.split_once('=').ok_or_else(|| syntax("expected type=fraction"))?;
                let frac: f64 = frac.parse().map_err(|_| syntax("invalid fraction"))?;
                if proportions.insert(name.to_string(), frac).is_some() {
                    return Err(syntax("duplicate type"));
                }
            }
            segments.push(MixSegment { start_window: start, proportions });
        }
        Self::new(segments)
    }

    pub fn segments(&self) -> &[MixSegment] {
        &self.segments
    }

    pub fn active(&self, window: u64) -> &MixSegment {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start_window <= window)
            .unwrap_or(&self.segments[0])
    }

    /// Every observation type mentioned by any segment, sorted.
    pub fn observation_types(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .segments
            .iter()
            .flat_map(|s| s.proportions.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let mix: Vec<String> = s.proportions.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!("segment {} {}\n", s.start_window, mix.join(",")));
        }
        out
    }
}

/// Splits `n` events over the fractions so each count is within one of
/// `fraction * n`. Ties go to the lexicographically first type.
pub fn apportion(n: u64, proportions: &BTreeMap<String, f64>) -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64, f64)> = proportions
        .iter()
        .map(|(k, &f)| {
            let exact = f * n as f64;
            let floor = exact.floor();
            (k.clone(), floor as u64, exact - floor)
        })
        .collect();
    let assigned: u64 = out.iter().map(|x| x.1).sum();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.total_cmp(&out[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        out[i].1 += 1;
    }
    out.into_iter().map(|(k, c, _)| (k, c)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Triples per second of event time.
    pub rate: f64,
    pub windows: u64,
    pub window_ms: u64,
    pub slide_ms: u64,
    pub batch_ms: u64,
    pub sensors: usize,
    pub seed: u64,
}

impl GeneratorParams {
    /// Event-time span covering `windows` windows.
    pub fn span_ms(&self) -> u64 {
        if self.windows == 0 {
            return 0;
        }
        (self.windows - 1) * self.slide_ms + self.window_ms
    }

    pub fn batch_count(&self) -> u64 {
        self.span_ms().div_ceil(self.batch_ms.max(1))
    }

    fn events_before(&self, batch: u64) -> u64 {
        let ms = batch * self.batch_ms;
        (self.rate * ms as f64 / 1000.0 / TRIPLES_PER_EVENT as f64).floor() as u64
    }
}

/// One generated observation: its topic plus three timed triples.
#[derive(Debug, Clone)]
pub struct Event {
    pub topic: Arc<str>,
    pub triples: Vec<TimedTriple>,
}

/// All events whose event time falls in one micro-batch interval.
#[derive(Debug, Clone)]
pub struct GeneratedBatch {
    pub index: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub events: Vec<Event>,
}

struct Vocabulary {
    has_value: Term,
    rdf_type: Term,
    numeric_value: Term,
    sensors: Vec<Term>,
    types: BTreeMap<String, (Arc<str>, Term)>,
}

/// Lazily yields one [`GeneratedBatch`] per micro-batch interval.
pub struct StreamGenerator {
    schedule: MixSchedule,
    params: GeneratorParams,
    rng: ChaCha8Rng,
    vocab: Vocabulary,
    next_batch: u64,
    next_observation: u64,
}

impl StreamGenerator {
    pub fn new(schedule: MixSchedule, params: GeneratorParams) -> Self {
        let iri = |s: String| Term::iri(s).expect("generator IRIs are well formed");
        let types = schedule
            .observation_types()
            .into_iter()
            .map(|t| {
                let term = iri(format!("{CUAHSI_NS}{t}"));
                (t.clone(), (Arc::from(t.as_str()), term))
            })
            .collect();
        let vocab = Vocabulary {
            has_value: iri(SSN_HAS_VALUE.to_string()),
            rdf_type: iri(RDF_TYPE.to_string()),
            numeric_value: iri(QUDT_NUMERIC_VALUE.to_string()),
            sensors: (0..params.sensors.max(1)).map(|k| iri(format!("{SENSOR_NS}{k}"))).collect(),
            types,
        };
        StreamGenerator {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            schedule,
            params,
            vocab,
            next_batch: 0,
            next_observation: 0,
        }
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    fn make_event(&mut self, kind: &str, time: u64) -> Event {
        let (topic, type_term) = self.vocab.types[kind].clone();
        let sensor = self.vocab.sensors[self.rng.gen_range(0..self.vocab.sensors.len())].clone();
        let obs = Term::iri(format!("{OBSERVATION_NS}{}", self.next_observation)).expect("valid IRI");
        self.next_observation += 1;
        let value: f64 = (self.rng.gen_range(0.0..100.0f64) * 100.0).round() / 100.0;
        let literal = Term::typed_literal(value.to_string(), XSD_DOUBLE).expect("valid datatype");
        let v = &self.vocab;
        let stamp = |t: Triple| TimedTriple::new(t, time, topic.clone()).expect("valid topic");
        let triples = vec![
            stamp(Triple::new(sensor, v.has_value.clone(), obs.clone()).expect("valid triple")),
            stamp(Triple::new(obs.clone(), v.rdf_type.clone(), type_term).expect("valid triple")),
            stamp(Triple::new(obs, v.numeric_value.clone(), literal).expect("valid triple")),
        ];
        Event { topic, triples }
    }
}

impl Iterator for StreamGenerator {
    type Item = GeneratedBatch;

    fn next(&mut self) -> Option<GeneratedBatch> {
        let index = self.next_batch;
        if index >= self.params.batch_count() {
            return None;
        }
        self.next_batch += 1;
        let start_ms = index * self.params.batch_ms;
        let end_ms = start_ms + self.params.batch_ms;
        let n = self.params.events_before(index + 1) - self.params.events_before(index);
        let window = start_ms / self.params.slide_ms.max(1);
        let counts = apportion(n, &self.schedule.active(window).proportions.clone());

        let mut plan: Vec<(u64, String)> = Vec::with_capacity(n as usize);
        for (kind, c) in counts {
            for _ in 0..c {
                let t = self.rng.gen_range(start_ms..end_ms);
                plan.push((t, kind.clone()));
            }
        }
        // stable: equal times keep apportionment order
        plan.sort_by_key(|(t, _)| *t);
        let events = plan.into_iter().map(|(t, kind)| self.make_event(&kind, t)).collect();
        Some(GeneratedBatch { index, start_ms, end_ms, events })
    }
}

/// Materializes the whole stream in event-time order.
pub fn generate_stream(schedule: &MixSchedule, params: &GeneratorParams) -> Vec<TimedTriple> {
    StreamGenerator::new(schedule.clone(), params.clone())
        .flat_map(|b| b.events.into_iter().flat_map(|e| e.triples))
        .collect()
}
