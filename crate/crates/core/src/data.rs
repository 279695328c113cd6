//! Survey-observation ingestion, validation and indexing.
//!
//! Proportions and standard errors are held as fractions. The CSV schema is
//! `country,region,method,sector,year,proportion,se`; an empty `region`
//! falls back to the bundled study-country table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::regions;

pub const CSV_HEADER: [&str; 7] = ["country", "region", "method", "sector", "year", "proportion", "se"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    FemaleSterilization,
    OcPills,
    Implants,
    Iud,
    Injectables,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FemaleSterilization,
        Method::OcPills,
        Method::Implants,
        Method::Iud,
        Method::Injectables,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::FemaleSterilization => "female_sterilization",
            Method::OcPills => "oc_pills",
            Method::Implants => "implants",
            Method::Iud => "iud",
            Method::Injectables => "injectables",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown method label `{s}`")))
    }
}

/// Supply sector. Only `Public` and `PrivateMedical` enter the likelihood;
/// `PrivateOther` is the remainder of the composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sector {
    Public,
    PrivateMedical,
    PrivateOther,
}

impl Sector {
    pub const ALL: [Sector; 3] = [Sector::Public, Sector::PrivateMedical, Sector::PrivateOther];

    pub fn label(self) -> &'static str {
        match self {
            Sector::Public => "public",
            Sector::PrivateMedical => "private_medical",
            Sector::PrivateOther => "private_other",
        }
    }

    /// Zero-based position in the share triple.
    pub fn index(self) -> usize {
        match self {
            Sector::Public => 0,
            Sector::PrivateMedical => 1,
            Sector::PrivateOther => 2,
        }
    }

    pub fn from_index(i: usize) -> Sector {
        Sector::ALL[i]
    }

    pub fn in_likelihood(self) -> bool {
        self != Sector::PrivateOther
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sector::ALL
            .into_iter()
            .find(|x| x.label() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown sector label `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub country: String,
    pub region: String,
    pub method: Method,
    pub sector: Sector,
    /// Calendar year, possibly fractional (survey midpoint).
    pub year: f64,
    pub proportion: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Fraction,
    Percent,
}

impl FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fraction" => Ok(Units::Fraction),
            "percent" => Ok(Units::Percent),
            other => Err(Error::Config(format!("unknown units `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub window: (f64, f64),
    pub units: Units,
    /// Allowed deviation from 1 of a fully reported sector triple.
    pub share_sum_tolerance: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            window: (1990.0, 2025.0),
            units: Units::Fraction,
            share_sum_tolerance: 0.01,
        }
    }
}

impl IngestConfig {
    pub fn year_grid(&self) -> Vec<f64> {
        let (start, end) = self.window;
        let first = start.ceil() as i64;
        let last = end.floor() as i64;
        (first..=last).map(|y| y as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryInfo {
    pub name: String,
    pub region: String,
    pub recent_year: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    /// Other-private rows are kept for reporting but carry no likelihood term.
    NonLikelihoodSector,
}

impl ExclusionReason {
    pub fn code(self) -> &'static str {
        match self {
            ExclusionReason::NonLikelihoodSector => "non_likelihood_sector",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    /// Index into `Dataset::observations`.
    pub observation: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    /// Sorted by name.
    pub countries: Vec<CountryInfo>,
    /// Sorted by name.
    pub regions: Vec<String>,
    /// Methods present, in canonical order.
    pub methods: Vec<Method>,
    pub year_grid: Vec<f64>,
    pub window: (f64, f64),
    pub exclusions: Vec<Exclusion>,
}

impl Dataset {
    /// Validates observations and builds the country, region and method
    /// tables.
    pub fn from_observations(observations: Vec<Observation>, config: &IngestConfig) -> Result<Self> {
        let (start, end) = config.window;
        if !(start < end) {
            return Err(Error::Config(format!("invalid window ({start}, {end})")));
        }
        for (i, o) in observations.iter().enumerate() {
            validate_observation(o, config).map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("observation {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        check_share_sums(&observations, config.share_sum_tolerance)?;

        let mut country_map: BTreeMap<&str, (String, f64)> = BTreeMap::new();
        for o in &observations {
            let entry = country_map
                .entry(o.country.as_str())
                .or_insert_with(|| (o.region.clone(), f64::NEG_INFINITY));
            if entry.0 != o.region {
                return Err(Error::Validation(format!(
                    "country `{}` assigned to regions `{}` and `{}`",
                    o.country, entry.0, o.region
                )));
            }
            entry.1 = entry.1.max(o.year);
        }
        let countries: Vec<CountryInfo> = country_map
            .into_iter()
            .map(|(name, (region, recent_year))| CountryInfo {
                name: name.to_string(),
                region,
                recent_year,
            })
            .collect();
        let regions: Vec<String> = countries
            .iter()
            .map(|c| c.region.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let methods: Vec<Method> = observations
            .iter()
            .map(|o| o.method)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let exclusions = observations
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.sector.in_likelihood())
            .map(|(i, _)| Exclusion {
                observation: i,
                reason: ExclusionReason::NonLikelihoodSector,
            })
            .collect();

        Ok(Dataset {
            observations,
            countries,
            regions,
            methods,
            year_grid: config.year_grid(),
            window: config.window,
            exclusions,
        })
    }

    pub fn country_index(&self, name: &str) -> Option<usize> {
        self.countries
            .binary_search_by(|c| c.name.as_str().cmp(name))
            .ok()
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.binary_search_by(|r| r.as_str().cmp(name)).ok()
    }

    pub fn method_index(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Distinct survey years per country.
    pub fn survey_years(&self, country: &str) -> Vec<f64> {
        let mut years: Vec<f64> = self
            .observations
            .iter()
            .filter(|o| o.country == country)
            .map(|o| o.year)
            .collect();
        years.sort_by(f64::total_cmp);
        years.dedup();
        years
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_observations(&self.observations, writer)
    }
}

fn validate_observation(o: &Observation, config: &IngestConfig) -> Result<()> {
    if o.country.trim().is_empty() {
        return Err(Error::Validation("empty country".into()));
    }
    if !(0.0..=1.0).contains(&o.proportion) {
        return Err(Error::Validation(format!(
            "proportion {} outside [0, 1]",
            o.proportion
        )));
    }
    if !(o.se > 0.0) || !o.se.is_finite() {
        return Err(Error::Validation(format!("standard error {} must be > 0", o.se)));
    }
    let (start, end) = config.window;
    if !(o.year >= start && o.year <= end) {
        return Err(Error::Validation(format!(
            "year {} outside estimation window {start}-{end}",
            o.year
        )));
    }
    Ok(())
}

fn check_share_sums(observations: &[Observation], tolerance: f64) -> Result<()> {
    let mut groups: BTreeMap<(&str, Method, u64), [Option<f64>; 3]> = BTreeMap::new();
    for o in observations {
        let slot = groups
            .entry((o.country.as_str(), o.method, o.year.to_bits()))
            .or_insert([None; 3]);
        slot[o.sector.index()] = Some(o.proportion);
    }
    for ((country, method, year_bits), shares) in groups {
        if let [Some(a), Some(b), Some(c)] = shares {
            let sum = a + b + c;
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::Validation(format!(
                    "{country} {method} {}: sector proportions sum to {sum:.4}",
                    f64::from_bits(year_bits)
                )));
            }
        }
    }
    Ok(())
}

/// Parses the observation CSV at `path`.
pub fn parse_observations(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_observations_from(file, config)
}

pub fn parse_observations_from<R: Read>(reader: R, config: &IngestConfig) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let scale = match config.units {
        Units::Fraction => 1.0,
        Units::Percent => {
            info!("converting proportions and standard errors from percent");
            0.01
        }
    };

    let mut observations = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != CSV_HEADER.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let number = |idx: usize| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("`{}` is not a number ({})", &record[idx], CSV_HEADER[idx])))
        };
        let country = record[0].to_string();
        let region = if record[1].is_empty() {
            regions::region_of(&country)
                .map(str::to_string)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "line {line}: no region given and `{country}` is not in the bundled table"
                    ))
                })?
        } else {
            record[1].to_string()
        };
        let with_line = |e: Error| match e {
            Error::Validation(msg) => Error::Validation(format!("line {line}: {msg}")),
            other => other,
        };
        let method: Method = record[2].parse().map_err(with_line)?;
        let sector: Sector = record[3].parse().map_err(with_line)?;
        let obs = Observation {
            country,
            region,
            method,
            sector,
            year: number(4)?,
            proportion: number(5)? * scale,
            se: number(6)? * scale,
        };
        validate_observation(&obs, config).map_err(with_line)?;
        observations.push(obs);
    }
    Dataset::from_observations(observations, config)
}

pub fn write_observations<W: Write>(observations: &[Observation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for o in observations {
        w.write_record([
            o.country.clone(),
            o.region.clone(),
            o.method.label().to_string(),
            o.sector.label().to_string(),
            o.year.to_string(),
            o.proportion.to_string(),
            o.se.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeSummary {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub per_method_mean: Vec<(Method, f64)>,
}

/// Range, median and per-method mean of the standard errors.
pub fn summarize_se(dataset: &Dataset) -> Result<SeSummary> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot summarize an empty dataset".into()));
    }
    let mut ses: Vec<f64> = dataset.observations.iter().map(|o| o.se).collect();
    ses.sort_by(f64::total_cmp);
    let n = ses.len();
    let median = if n % 2 == 1 {
        ses[n / 2]
    } else {
        0.5 * (ses[n / 2 - 1] + ses[n / 2])
    };
    let per_method_mean = dataset
        .methods
        .iter()
        .map(|&m| {
            let (sum, count) = dataset
                .observations
                .iter()
                .filter(|o| o.method == m)
                .fold((0.0, 0usize), |(s, c), o| (s + o.se, c + 1));
            (m, sum / count as f64)
        })
        .collect();
    Ok(SeSummary {
        min: ses[0],
        max: ses[n - 1],
        median,
        per_method_mean,
    })
}

/// Clamps a proportion to the open interval used by the likelihood.
pub(crate) fn nudge_proportion(y: f64) -> f64 {
    const EDGE: f64 = 1e-4;
    if !(EDGE..=1.0 - EDGE).contains(&y) {
        warn!("observed proportion {y} nudged into [{EDGE}, {}]", 1.0 - EDGE);
    }
    y.clamp(EDGE, 1.0 - EDGE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_observations_from(text.as_bytes(), &IngestConfig::default())
    }

    const HEADER: &str = "country,region,method,sector,year,proportion,se\n";

    #[test]
    fn parses_single_row() {
        let ds = parse(&format!(
            "{HEADER}Zimbabwe,Southern Africa,oc_pills,public,2015,0.62,0.021\n"
        ))
        .unwrap();
        assert_eq!(
            ds.observations[0],
            Observation {
                country: "Zimbabwe".into(),
                region: "Southern Africa".into(),
                method: Method::OcPills,
                sector: Sector::Public,
                year: 2015.0,
                proportion: 0.62,
                se: 0.021,
            }
        );
        assert_eq!(ds.countries[0].recent_year, 2015.0);
        assert_eq!(ds.year_grid.len(), 36);
    }

    #[test]
    fn rejects_out_of_range_proportion() {
        let err = parse(&format!("{HEADER}Zimbabwe,,oc_pills,public,2015,1.2,0.021\n")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_non_positive_se_and_unknown_method() {
        assert!(matches!(
            parse(&format!("{HEADER}Zimbabwe,,oc_pills,public,2015,0.5,0\n")),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse(&format!("{HEADER}Zimbabwe,,condoms,public,2015,0.5,0.02\n")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse(&format!(
            "{HEADER}Zimbabwe,,oc_pills,public,2015,0.5,0.02\nNepal,,iud,public,twenty,0.5,0.02\n"
        ))
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            parse("country,method,sector,year,proportion,se\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn region_falls_back_to_bundled_table() {
        let ds = parse(&format!("{HEADER}Nepal,,iud,public,2016,0.8,0.03\n")).unwrap();
        assert_eq!(ds.countries[0].region, "Southern Asia");
        assert!(parse(&format!("{HEADER}Atlantis,,iud,public,2016,0.8,0.03\n")).is_err());
    }

    #[test]
    fn percent_units_are_converted() {
        let cfg = IngestConfig {
            units: Units::Percent,
            ..IngestConfig::default()
        };
        let ds = parse_observations_from(
            format!("{HEADER}Nepal,,iud,public,2016,80,3\n").as_bytes(),
            &cfg,
        )
        .unwrap();
        assert!((ds.observations[0].proportion - 0.8).abs() < 1e-15);
        assert!((ds.observations[0].se - 0.03).abs() < 1e-15);
    }

    #[test]
    fn sector_triple_must_sum_to_one() {
        let bad = format!(
            "{HEADER}Nepal,,iud,public,2016,0.8,0.03\nNepal,,iud,private_medical,2016,0.15,0.03\nNepal,,iud,private_other,2016,0.2,0.03\n"
        );
        assert!(matches!(parse(&bad), Err(Error::Validation(_))));
        let good = bad.replace("0.2,0.03", "0.05,0.03");
        let ds = parse(&good).unwrap();
        assert_eq!(ds.exclusions.len(), 1);
        assert_eq!(ds.exclusions[0].reason.code(), "non_likelihood_sector");
    }

    #[test]
    fn year_outside_window_rejected() {
        assert!(parse(&format!("{HEADER}Nepal,,iud,public,1985,0.8,0.03\n")).is_err());
    }

    #[test]
    fn fractional_years_and_recent_year() {
        let ds = parse(&format!(
            "{HEADER}Nepal,,iud,public,2011,0.8,0.03\nNepal,,oc_pills,public,2016.5,0.4,0.03\n"
        ))
        .unwrap();
        assert_eq!(ds.countries[0].recent_year, 2016.5);
        assert_eq!(ds.methods, vec![Method::OcPills, Method::Iud]);
        assert_eq!(ds.survey_years("Nepal"), vec![2011.0, 2016.5]);
    }

    #[test]
    fn se_summary() {
        let ds = parse(&format!("{HEADER}Nepal,,iud,public,2016,0.8,0.05\n")).unwrap();
        let s = summarize_se(&ds).unwrap();
        assert_eq!((s.min, s.max, s.median), (0.05, 0.05, 0.05));

        let ds = parse(&format!(
            "{HEADER}Nepal,,iud,public,2016,0.8,0.02\nNepal,,iud,public,2011,0.8,0.04\n"
        ))
        .unwrap();
        let s = summarize_se(&ds).unwrap();
        assert!((s.median - 0.03).abs() < 1e-15);
        assert_eq!(s.per_method_mean.len(), 1);
        assert!((s.per_method_mean[0].1 - 0.03).abs() < 1e-15);
    }

    #[test]
    fn se_summary_of_empty_dataset_fails() {
        let ds = Dataset::from_observations(vec![], &IngestConfig::default()).unwrap();
        assert!(summarize_se(&ds).is_err());
    }
}
