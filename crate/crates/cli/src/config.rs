//! Fit configuration: a TOML document overlaid with command-line flags.

use std::path::Path;

use serde::Deserialize;
use sqlglm::{FitOptions, InfoSource, Link, ModelSpec, ReportFormat, SampleMethod};

use crate::args::{FitArgs, FormatArg, InfoSourceArg, MethodArg};
use crate::failure::Failure;
use crate::terms::{parse_response, parse_terms};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Database file, or `sqlite://` URL.
    pub db: Option<String>,
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub timings: Option<bool>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sample: SampleSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub table: Option<String>,
    pub response: Option<String>,
    pub terms: Option<TermList>,
    pub family: Option<String>,
    pub link: Option<String>,
    pub filter: Option<String>,
    pub max_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TermList {
    Joined(String),
    List(Vec<String>),
}

impl TermList {
    fn items(&self) -> Vec<String> {
        match self {
            TermList::Joined(s) => vec![s.clone()],
            TermList::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub exponent: Option<f64>,
    pub floor: Option<u64>,
    /// `bernoulli` or `exact`.
    pub method: Option<String>,
    /// `subsample` or `full`.
    pub info_source: Option<String>,
}

/// Everything `fit` needs.
#[derive(Debug, Clone)]
pub struct FitPlan {
    pub db: String,
    pub spec: ModelSpec,
    pub options: FitOptions,
    pub format: ReportFormat,
    pub timings: bool,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config("config_file", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::config("config_file", e.message().to_string()))
    }

    /// Flags win over file values.
    pub fn overlay(&mut self, a: &FitArgs) {
        fn set<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        set(&mut self.db, &a.db);
        set(&mut self.seed, &a.seed);
        set(&mut self.model.table, &a.table);
        set(&mut self.model.response, &a.response);
        set(&mut self.model.family, &a.family);
        set(&mut self.model.link, &a.link);
        set(&mut self.model.filter, &a.filter);
        set(&mut self.model.max_levels, &a.max_levels);
        set(&mut self.sample.exponent, &a.exponent);
        set(&mut self.sample.floor, &a.floor);
        if let Some(t) = &a.terms {
            self.model.terms = Some(TermList::Joined(t.clone()));
        }
        if let Some(f) = a.format {
            self.format = Some(
                match f {
                    FormatArg::Text => "text",
                    FormatArg::Json => "json",
                    FormatArg::Csv => "csv",
                }
                .into(),
            );
        }
        if let Some(m) = a.sample_method {
            self.sample.method = Some(
                match m {
                    MethodArg::Bernoulli => "bernoulli",
                    MethodArg::Exact => "exact",
                }
                .into(),
            );
        }
        if let Some(s) = a.info_source {
            self.sample.info_source = Some(
                match s {
                    InfoSourceArg::Subsample => "subsample",
                    InfoSourceArg::Full => "full",
                }
                .into(),
            );
        }
        if a.timings {
            self.timings = Some(true);
        }
    }

    pub fn plan(&self) -> Result<FitPlan, Failure> {
        let missing = |what: &str| Failure::config("missing_option", format!("no {what} given"));
        let db = self.db.as_deref().ok_or_else(|| missing("database (--db or SQLGLM_DB)"))?;
        let db = db.strip_prefix("sqlite://").unwrap_or(db).to_string();
        let m = &self.model;
        let table = m.table.clone().ok_or_else(|| missing("table"))?;
        let response = parse_response(m.response.as_deref().ok_or_else(|| missing("response"))?)?;
        let family: sqlglm::Family = m.family.as_deref().ok_or_else(|| missing("family"))?.parse()?;
        let link: Link = match &m.link {
            Some(l) => l.parse()?,
            None => family.canonical_link(),
        };
        let terms = parse_terms(&m.terms.as_ref().map(TermList::items).unwrap_or_default())?;

        let mut spec = ModelSpec::new(table, response, family, link);
        for t in terms.terms {
            spec = spec.term(t);
        }
        if terms.no_intercept {
            spec = spec.without_intercept();
        }
        if let Some(f) = &m.filter {
            spec = spec.with_filter(f.clone());
        }

        let mut options = FitOptions {
            seed: self.seed,
            ..FitOptions::default()
        };
        if let Some(e) = self.sample.exponent {
            options.sample.exponent = e;
        }
        if let Some(f) = self.sample.floor {
            options.sample.floor = f;
        }
        if let Some(l) = m.max_levels {
            options.max_levels = l;
        }
        options.sample.method = match self.sample.method.as_deref() {
            None | Some("bernoulli") => SampleMethod::Bernoulli,
            Some("exact") => SampleMethod::Exact,
            Some(other) => return Err(Failure::config("invalid_option", format!("unknown sample method {other:?}"))),
        };
        options.info_source = match self.sample.info_source.as_deref() {
            None | Some("subsample") | Some("scaled_subsample") => InfoSource::ScaledSubsample,
            Some("full") | Some("full_data") => InfoSource::FullData,
            Some(other) => return Err(Failure::config("invalid_option", format!("unknown info source {other:?}"))),
        };
        options.sample.validate()?;
        let format: ReportFormat = self.format.as_deref().unwrap_or("text").parse()?;
        Ok(FitPlan {
            db,
            spec,
            options,
            format,
            timings: self.timings.unwrap_or(false),
        })
    }
}
