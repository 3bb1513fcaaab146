//! Geographic normalization so panels from different sources share a key space.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{normalize_fips, state_by_fips, state_by_name, Level, Panel, SeriesKey};

/// Replaces the member counties by one pseudo-location holding their sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub target_fips: String,
    pub target_name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Exclusion {
    /// Matches county codes, and states whose own code, with this prefix.
    FipsPrefix { prefix: String },
    /// Matches county names starting with this prefix.
    NamePrefix { prefix: String },
}

impl Exclusion {
    pub fn matches(&self, key: &SeriesKey) -> bool {
        match self {
            Exclusion::FipsPrefix { prefix } => {
                let code = match key.level {
                    Level::County => key.fips.clone(),
                    Level::State => key
                        .state_name
                        .as_deref()
                        .and_then(state_by_name)
                        .map(|s| s.fips.to_string()),
                    Level::National => None,
                };
                code.is_some_and(|c| c.starts_with(prefix.as_str()))
            }
            Exclusion::NamePrefix { prefix } => key
                .county_name
                .as_deref()
                .is_some_and(|n| n.starts_with(prefix.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoRuleSet {
    #[serde(default)]
    pub merges: Vec<MergeRule>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    /// `"County, State"` → fips, for rows published without a code.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

pub const NYC_FIPS: [&str; 5] = ["36047", "36081", "36005", "36085", "36061"];

/// Utah reports several multi-county health districts as single locations.
pub const UTAH_DISTRICTS: [(&str, &str, &[&str]); 6] = [
    ("49901", "Bear River", &["49003", "49005", "49033"]),
    (
        "49902",
        "Central Utah",
        &["49023", "49027", "49031", "49039", "49041", "49055"],
    ),
    ("49903", "Southeast Utah", &["49007", "49015", "49019"]),
    (
        "49904",
        "Southwest Utah",
        &["49001", "49017", "49021", "49025", "49053"],
    ),
    ("49905", "TriCounty", &["49009", "49013", "49047"]),
    ("49906", "Weber-Morgan", &["49029", "49057"]),
];

/// American Samoa, Guam, Northern Mariana Islands, Puerto Rico, Virgin Islands.
pub const ISLAND_PREFIXES: [&str; 5] = ["60", "66", "69", "72", "78"];

impl GeoRuleSet {
    pub fn empty() -> Self {
        GeoRuleSet {
            merges: Vec::new(),
            exclusions: Vec::new(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for rule in &self.merges {
            let target = valid_county_fips(&rule.target_fips)?;
            if rule.members.is_empty() {
                return Err(IngestError::Rules(format!("merge into {target} has no members")));
            }
            for m in &rule.members {
                let m = valid_county_fips(m)?;
                if !seen.insert(m.clone()) {
                    return Err(IngestError::Rules(format!("fips {m} appears in two merge rules")));
                }
            }
        }
        for (name, fips) in &self.aliases {
            valid_county_fips(fips)
                .map_err(|_| IngestError::Rules(format!("alias `{name}` resolves to invalid fips `{fips}`")))?;
        }
        Ok(())
    }
}

impl Default for GeoRuleSet {
    fn default() -> Self {
        let mut merges = vec![MergeRule {
            target_fips: "36061".into(),
            target_name: "New York City".into(),
            members: NYC_FIPS.iter().map(|s| s.to_string()).collect(),
        }];
        let mut aliases = BTreeMap::from([("New York City, New York".to_string(), "36061".to_string())]);
        for (fips, name, members) in UTAH_DISTRICTS {
            merges.push(MergeRule {
                target_fips: fips.into(),
                target_name: name.into(),
                members: members.iter().map(|s| s.to_string()).collect(),
            });
            aliases.insert(format!("{name}, Utah"), fips.into());
        }
        let mut exclusions: Vec<Exclusion> = ISLAND_PREFIXES
            .iter()
            .map(|p| Exclusion::FipsPrefix { prefix: p.to_string() })
            .collect();
        exclusions.push(Exclusion::NamePrefix {
            prefix: "Out of".into(),
        });
        GeoRuleSet {
            merges,
            exclusions,
            aliases,
        }
    }
}

fn valid_county_fips(raw: &str) -> Result<String, IngestError> {
    let f = normalize_fips(raw).map_err(|e| IngestError::Rules(e.to_string()))?;
    if state_by_fips(&f[..2]).is_none() {
        return Err(IngestError::Rules(format!("fips {f} has no known state")));
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeOutcome {
    pub target: String,
    pub merged: Vec<String>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedSeries {
    pub label: String,
    pub final_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub merges: Vec<MergeOutcome>,
    pub excluded: Vec<ExcludedSeries>,
    pub warnings: Vec<String>,
    pub total_before: f64,
    pub total_after: f64,
    pub excluded_total: f64,
}

/// Applies exclusions, then merges. Merge rules only touch county panels.
pub fn normalize_geography(panel: &Panel, rules: &GeoRuleSet) -> Result<(Panel, NormalizationReport), IngestError> {
    rules.validate()?;
    let mut out = panel.clone();
    let mut report = NormalizationReport {
        total_before: panel.total(),
        ..Default::default()
    };
    let excluded: Vec<SeriesKey> = out
        .keys()
        .filter(|k| rules.exclusions.iter().any(|x| x.matches(k)))
        .cloned()
        .collect();
    for key in excluded {
        let s = out.remove(&key).expect("key listed from panel");
        report.excluded_total += s.last();
        report.excluded.push(ExcludedSeries {
            label: key.label(),
            final_value: s.last(),
        });
    }
    if out.level == Level::County {
        for rule in &rules.merges {
            merge_one(&mut out, rule, &mut report)?;
        }
    }
    report.total_after = out.total();
    Ok((out, report))
}

fn merge_one(panel: &mut Panel, rule: &MergeRule, report: &mut NormalizationReport) -> Result<(), IngestError> {
    let target_fips = valid_county_fips(&rule.target_fips)?;
    let mut members: Vec<String> = rule
        .members
        .iter()
        .map(|m| valid_county_fips(m))
        .collect::<Result<_, _>>()?;
    // A source may already report the pseudo-location itself.
    let implicit_target = !members.contains(&target_fips);
    if implicit_target {
        members.push(target_fips.clone());
    }
    let mut sum = vec![0.0; panel.num_days()];
    let mut outcome = MergeOutcome {
        target: target_fips.clone(),
        merged: Vec::new(),
        missing: Vec::new(),
    };
    let mut state_name = None;
    for m in &members {
        let probe = SeriesKey::county_from_fips(m, "").map_err(|e| IngestError::Rules(e.to_string()))?;
        match panel.remove(&probe) {
            Some(s) => {
                for (a, v) in sum.iter_mut().zip(s.values()) {
                    *a += v;
                }
                state_name = s.key.state_name.clone();
                outcome.merged.push(m.clone());
            }
            None if implicit_target && *m == target_fips => {}
            None => outcome.missing.push(m.clone()),
        }
    }
    if outcome.merged.is_empty() {
        return Ok(());
    }
    for m in &outcome.missing {
        let w = format!("merge into {target_fips}: member {m} missing from panel");
        log::warn!("{w}");
        report.warnings.push(w);
    }
    let state_name = state_name.expect("at least one member merged");
    let key = SeriesKey::county(&target_fips, rule.target_name.clone(), state_name)?;
    panel.insert_values(key, sum)?;
    report.merges.push(outcome);
    Ok(())
}
