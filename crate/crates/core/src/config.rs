//! Monitoring configuration: line-oriented `key = value` files with the
//! annotation-style keys, environment overrides, and the allow/deny scan
//! patterns that gate which event types are monitored at all.
//!
//! ```text
//! criteria = "(more frequent U most expensive) & least changeable"
//! samplingPercentage = 0.5
//! analysisFixedDelay = 120
//! frequencyMetric = INVOCATION_FREQUENCY
//! expensivenessMetric = EXECUTION_TIME
//! changeabilityMetric = COMPUTATION_PATTERN
//! allowed = "org.sample.petclinic.*"
//! denied = "org.sample.petclinic.model.*"
//! ```
//!
//! Every key can be overridden by `TIGRIS_<UPPERCASED_KEY>` in the
//! environment, e.g. `TIGRIS_SAMPLINGPERCENTAGE=0.25`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{default_direction, CriterionBinding, Direction, DEFAULT_SIGMA_K};
use crate::dsl::{parse_filter, Criterion, FilterExpr, SyntaxError};
use crate::metrics::{MetricKind, DEFAULT_SESSION_CAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected 'key = value', got '{text}'")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: unknown configuration key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("key '{key}': {detail}")]
    InvalidValue { key: String, detail: String },
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("key 'criteria': {0}")]
    Criteria(#[from] SyntaxError),
    #[error("criterion '{0}' is referenced by the filter but has no metric binding")]
    UnboundCriterion(Criterion),
    #[error("sampling rate must be within [0, 1], got {0}")]
    InvalidRate(f64),
    #[error("analysis delay must be a positive number of seconds, got '{0}'")]
    InvalidDelay(String),
    #[error("criterion '{criterion}' is bound to static metric '{metric}' but no staticMetricFile is configured")]
    UnknownMetricBinding {
        criterion: Criterion,
        metric: String,
    },
}

/// Fully validated engine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringConfig {
    /// Original filter text, kept for reports.
    pub criteria_text: String,
    pub filter: FilterExpr,
    pub bindings: Vec<CriterionBinding>,
    pub sampling_percentage: f64,
    pub analysis_fixed_delay_s: u64,
    pub allowed_patterns: Vec<String>,
    pub denied_patterns: Vec<String>,
    pub static_metric_file: Option<PathBuf>,
    pub sigma_k: f64,
    pub session_cap: usize,
}

impl MonitoringConfig {
    /// Programmatic construction with defaults for the optional knobs.
    pub fn new(
        criteria: &str,
        bindings: Vec<CriterionBinding>,
        sampling_percentage: f64,
        analysis_fixed_delay_s: u64,
    ) -> Result<Self, ConfigError> {
        let config = MonitoringConfig {
            criteria_text: criteria.to_string(),
            filter: parse_filter(criteria)?,
            bindings,
            sampling_percentage,
            analysis_fixed_delay_s,
            allowed_patterns: Vec::new(),
            denied_patterns: Vec::new(),
            static_metric_file: None,
            sigma_k: DEFAULT_SIGMA_K,
            session_cap: DEFAULT_SESSION_CAP,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_patterns(mut self, allowed: Vec<String>, denied: Vec<String>) -> Self {
        self.allowed_patterns = allowed;
        self.denied_patterns = denied;
        self
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !self.sampling_percentage.is_finite()
            || !(0.0..=1.0).contains(&self.sampling_percentage)
        {
            return Err(ConfigError::InvalidRate(self.sampling_percentage));
        }
        if self.analysis_fixed_delay_s == 0 {
            return Err(ConfigError::InvalidDelay("0".into()));
        }
        if self.sigma_k <= 0.0 || self.sigma_k.is_nan() {
            return Err(ConfigError::InvalidValue {
                key: "sigmaK".into(),
                detail: format!("must be positive, got {}", self.sigma_k),
            });
        }
        if self.session_cap == 0 {
            return Err(ConfigError::InvalidValue {
                key: "sessionCap".into(),
                detail: "must be positive".into(),
            });
        }
        let bound: BTreeSet<Criterion> = self.bindings.iter().map(|b| b.criterion).collect();
        if bound.len() != self.bindings.len() {
            let mut seen = BTreeSet::new();
            for b in &self.bindings {
                if !seen.insert(b.criterion) {
                    return Err(ConfigError::InvalidValue {
                        key: format!("{}Metric", binding_key_stem(b.criterion)),
                        detail: "criterion bound more than once".into(),
                    });
                }
            }
        }
        for criterion in self.filter.referenced_criteria() {
            if !bound.contains(&criterion) {
                return Err(ConfigError::UnboundCriterion(criterion));
            }
        }
        if self.static_metric_file.is_none() {
            for b in &self.bindings {
                if let MetricKind::StaticMetric(name) = &b.metric {
                    return Err(ConfigError::UnknownMetricBinding {
                        criterion: b.criterion,
                        metric: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Metric kinds the coarse phase must estimate.
    pub fn metric_kinds(&self) -> BTreeSet<MetricKind> {
        self.bindings.iter().map(|b| b.metric.clone()).collect()
    }

    /// Scan-scope decision: an event type is admitted iff it matches some
    /// allowed pattern (empty list means allow-all) and no denied pattern.
    pub fn admits(&self, event_type_id: &str) -> bool {
        if self
            .denied_patterns
            .iter()
            .any(|p| glob_match(p, event_type_id))
        {
            return false;
        }
        self.allowed_patterns.is_empty()
            || self
                .allowed_patterns
                .iter()
                .any(|p| glob_match(p, event_type_id))
    }
}

/// Free-function form of [`MonitoringConfig::admits`].
pub fn admit_event(config: &MonitoringConfig, event_type_id: &str) -> bool {
    config.admits(event_type_id)
}

/// Minimal glob dialect: `*` matches any run of characters (including
/// dots); everything else is literal.
pub fn glob_match(pattern: &str, value: &str) -> bool {
    let pat: Vec<char> = pattern.chars().collect();
    let val: Vec<char> = value.chars().collect();
    let (mut p, mut v) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while v < val.len() {
        if p < pat.len() && pat[p] == '*' {
            star = Some((p, v));
            p += 1;
        } else if p < pat.len() && pat[p] == val[v] {
            p += 1;
            v += 1;
        } else if let Some((sp, sv)) = star {
            // backtrack: let the last star absorb one more character
            p = sp + 1;
            v = sv + 1;
            star = Some((sp, sv + 1));
        } else {
            return false;
        }
    }
    while p < pat.len() && pat[p] == '*' {
        p += 1;
    }
    p == pat.len()
}

fn binding_key_stem(criterion: Criterion) -> &'static str {
    match criterion {
        Criterion::Frequency => "frequency",
        Criterion::Maintainability => "maintainability",
        Criterion::Expensiveness => "expensiveness",
        Criterion::Changeability => "changeability",
        Criterion::ErrorProneness => "errorProneness",
        Criterion::UsagePattern => "usagePattern",
        Criterion::StateVariation => "stateVariation",
        Criterion::Concurrency => "concurrency",
        Criterion::Latency => "latency",
    }
}

fn criterion_for_stem(stem: &str) -> Option<Criterion> {
    Criterion::ALL
        .iter()
        .copied()
        .find(|c| binding_key_stem(*c).eq_ignore_ascii_case(stem))
}

/// All recognized keys, lowercased.
fn known_keys() -> Vec<String> {
    let mut keys = vec![
        "criteria".to_string(),
        "samplingpercentage".to_string(),
        "analysisfixeddelay".to_string(),
        "allowed".to_string(),
        "denied".to_string(),
        "staticmetricfile".to_string(),
        "sigmak".to_string(),
        "sessioncap".to_string(),
    ];
    for c in Criterion::ALL {
        keys.push(format!("{}metric", binding_key_stem(c).to_lowercase()));
        keys.push(format!("{}direction", binding_key_stem(c).to_lowercase()));
    }
    keys
}

/// Strip one layer of double quotes, if present.
fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        t[1..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

/// Split a comma-separated list, honoring double quotes so quoted items
/// may contain commas.
fn split_list(value: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in value.chars() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            ',' if !in_quotes => {
                items.push(current.clone());
                current.clear();
            }
            _ => current.push(c),
        }
    }
    items.push(current);
    items
        .into_iter()
        .map(|s| unquote(&s))
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Default)]
struct RawConfig {
    criteria: Option<String>,
    sampling_percentage: Option<String>,
    analysis_fixed_delay: Option<String>,
    allowed: Option<String>,
    denied: Option<String>,
    static_metric_file: Option<String>,
    sigma_k: Option<String>,
    session_cap: Option<String>,
    metrics: Vec<(Criterion, String)>,
    directions: Vec<(Criterion, String)>,
}

impl RawConfig {
    fn set(&mut self, key_lower: &str, value: String, line: usize) -> Result<(), ConfigError> {
        match key_lower {
            "criteria" => self.criteria = Some(value),
            "samplingpercentage" => self.sampling_percentage = Some(value),
            "analysisfixeddelay" => self.analysis_fixed_delay = Some(value),
            "allowed" => self.allowed = Some(value),
            "denied" => self.denied = Some(value),
            "staticmetricfile" => self.static_metric_file = Some(value),
            "sigmak" => self.sigma_k = Some(value),
            "sessioncap" => self.session_cap = Some(value),
            _ => {
                if let Some(stem) = key_lower.strip_suffix("metric") {
                    if let Some(c) = criterion_for_stem(stem) {
                        self.metrics.retain(|(existing, _)| *existing != c);
                        self.metrics.push((c, value));
                        return Ok(());
                    }
                }
                if let Some(stem) = key_lower.strip_suffix("direction") {
                    if let Some(c) = criterion_for_stem(stem) {
                        self.directions.retain(|(existing, _)| *existing != c);
                        self.directions.push((c, value));
                        return Ok(());
                    }
                }
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key_lower.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn parse_direction(key: &str, value: &str) -> Result<Direction, ConfigError> {
    match value.to_lowercase().replace(['_', '-'], "").as_str() {
        "higherismore" => Ok(Direction::HigherIsMore),
        "higherisless" => Ok(Direction::HigherIsLess),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            detail: format!("expected higherIsMore or higherIsLess, got '{value}'"),
        }),
    }
}

fn build(raw: RawConfig) -> Result<MonitoringConfig, ConfigError> {
    let criteria_text = unquote(&raw.criteria.ok_or(ConfigError::MissingKey("criteria"))?);
    let filter = parse_filter(&criteria_text)?;

    let rate_text = raw
        .sampling_percentage
        .ok_or(ConfigError::MissingKey("samplingPercentage"))?;
    let sampling_percentage: f64 =
        rate_text
            .trim()
            .parse()
            .map_err(|_| ConfigError::InvalidValue {
                key: "samplingPercentage".into(),
                detail: format!("'{rate_text}' is not a number"),
            })?;

    let delay_text = raw
        .analysis_fixed_delay
        .ok_or(ConfigError::MissingKey("analysisFixedDelay"))?;
    let analysis_fixed_delay_s: u64 = delay_text
        .trim()
        .parse()
        .map_err(|_| ConfigError::InvalidDelay(delay_text.clone()))?;

    let sigma_k = match raw.sigma_k {
        None => DEFAULT_SIGMA_K,
        Some(text) => text.trim().parse().map_err(|_| ConfigError::InvalidValue {
            key: "sigmaK".into(),
            detail: format!("'{text}' is not a number"),
        })?,
    };
    let session_cap = match raw.session_cap {
        None => DEFAULT_SESSION_CAP,
        Some(text) => text.trim().parse().map_err(|_| ConfigError::InvalidValue {
            key: "sessionCap".into(),
            detail: format!("'{text}' is not a positive integer"),
        })?,
    };

    let mut directions: Vec<(Criterion, Direction)> = Vec::new();
    for (criterion, value) in &raw.directions {
        let key = format!("{}Direction", binding_key_stem(*criterion));
        directions.push((*criterion, parse_direction(&key, value)?));
    }

    let mut bindings = Vec::new();
    for (criterion, value) in &raw.metrics {
        let key = format!("{}Metric", binding_key_stem(*criterion));
        let metric: MetricKind =
            unquote(value)
                .parse()
                .map_err(|e: crate::metrics::UnknownMetric| ConfigError::InvalidValue {
                    key,
                    detail: e.to_string(),
                })?;
        let direction = directions
            .iter()
            .find(|(c, _)| c == criterion)
            .map(|(_, d)| *d)
            .unwrap_or_else(|| default_direction(*criterion));
        bindings.push(CriterionBinding {
            criterion: *criterion,
            metric,
            direction,
        });
    }
    bindings.sort_by_key(|b| b.criterion);

    let config = MonitoringConfig {
        criteria_text,
        filter,
        bindings,
        sampling_percentage,
        analysis_fixed_delay_s,
        allowed_patterns: raw.allowed.map(|v| split_list(&v)).unwrap_or_default(),
        denied_patterns: raw.denied.map(|v| split_list(&v)).unwrap_or_default(),
        static_metric_file: raw
            .static_metric_file
            .map(|v| PathBuf::from(unquote(&v)))
            .filter(|p| !p.as_os_str().is_empty()),
        sigma_k,
        session_cap,
    };
    config.validate()?;
    Ok(config)
}

/// Parse config text, then apply `TIGRIS_<UPPERCASED_KEY>` overrides
/// resolved through `env`.
pub fn load_config_with_env(
    text: &str,
    env: impl Fn(&str) -> Option<String>,
) -> Result<MonitoringConfig, ConfigError> {
    let mut raw = RawConfig::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::MalformedLine {
                line: line_no,
                text: trimmed.to_string(),
            });
        };
        let key_lower = key.trim().to_lowercase();
        raw.set(&key_lower, value.trim().to_string(), line_no)?;
    }
    for key in known_keys() {
        let var = format!("TIGRIS_{}", key.to_uppercase());
        if let Some(value) = env(&var) {
            raw.set(&key, value, 0)?;
        }
    }
    build(raw)
}

/// Load and validate a config file, honoring environment overrides.
pub fn load_config(path: impl AsRef<Path>) -> Result<MonitoringConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    load_config_with_env(&text, |var| std::env::var(var).ok())
}
