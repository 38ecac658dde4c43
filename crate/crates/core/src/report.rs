//! Per-domain composition of a selection and comparisons between
//! selections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::selector::SelectionResult;
use crate::util;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainRow {
    pub domain: String,
    pub selected_hours: f64,
    pub pool_hours: f64,
    /// Percentage of the domain's pool hours that were selected.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionReport {
    /// Sorted by selected hours, largest first.
    pub rows: Vec<DomainRow>,
    pub total_selected_hours: f64,
    pub total_pool_hours: f64,
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

pub fn report(selection: &SelectionResult, pool_manifest: &Manifest) -> Result<CompositionReport> {
    let index = pool_manifest.index();
    let mut domains: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for u in &pool_manifest.utterances {
        domains.entry(&u.domain_tag).or_default().1 += u.hours();
    }
    for id in selection.ids() {
        let &i = index
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("{id} is not in the pool manifest")))?;
        let u = &pool_manifest.utterances[i];
        domains.get_mut(u.domain_tag.as_str()).unwrap().0 += u.hours();
    }
    let mut rows: Vec<DomainRow> = domains
        .into_iter()
        .map(|(d, (sel, pool))| DomainRow {
            domain: d.to_string(),
            selected_hours: sel,
            pool_hours: pool,
            percent: pct(sel, pool),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.selected_hours
            .total_cmp(&a.selected_hours)
            .then_with(|| a.domain.cmp(&b.domain))
    });
    Ok(CompositionReport {
        total_selected_hours: rows.iter().map(|r| r.selected_hours).sum(),
        total_pool_hours: rows.iter().map(|r| r.pool_hours).sum(),
        rows,
    })
}

impl CompositionReport {
    pub fn row(&self, domain: &str) -> Option<&DomainRow> {
        self.rows.iter().find(|r| r.domain == domain)
    }

    /// Aligned text table: component, selected hours, pool hours and the
    /// percentage of each domain that was selected. Hours get one decimal,
    /// or three when the pool is under ten hours.
    pub fn render(&self) -> String {
        let p = if self.total_pool_hours >= 10.0 { 1 } else { 3 };
        let width = self
            .rows
            .iter()
            .map(|r| r.domain.len())
            .chain([9])
            .max()
            .unwrap();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>16}  {:>12}  {:>10}",
            "Component", "Duration (hours)", "Pool (hours)", "% of domain"
        );
        let _ = writeln!(s, "{}", "-".repeat(width + 46));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>16.p$}  {:>12.p$}  {:>10}",
                r.domain,
                r.selected_hours,
                r.pool_hours,
                format!("{:.1}%", r.percent)
            );
        }
        let _ = writeln!(s, "{}", "-".repeat(width + 46));
        let _ = writeln!(
            s,
            "{:<width$}  {:>16.p$}  {:>12.p$}  {:>10}",
            "Total", self.total_selected_hours, self.total_pool_hours, "n/a"
        );
        s
    }

    /// `domain \t selected_hours \t pool_hours \t percent`, with a header
    /// line and a closing total row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("domain\tselected_hours\tpool_hours\tpercent_of_domain\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                r.domain,
                util::fmt_sig9(r.selected_hours),
                util::fmt_sig9(r.pool_hours),
                util::fmt_sig9(r.percent)
            );
        }
        let _ = writeln!(
            s,
            "total\t{}\t{}\t{}",
            util::fmt_sig9(self.total_selected_hours),
            util::fmt_sig9(self.total_pool_hours),
            util::fmt_sig9(pct(self.total_selected_hours, self.total_pool_hours))
        );
        s
    }

    pub fn write(&self, text_path: &Path, tsv_path: &Path) -> Result<()> {
        util::write_all(text_path, self.render().as_bytes())?;
        util::write_all(tsv_path, self.to_tsv().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub hours: f64,
    /// Selected target-domain hours over pool target-domain hours.
    pub recall: f64,
    /// Selected target-domain hours over selected hours.
    pub precision: f64,
    /// Precision over the target domain's share of the pool.
    pub enrichment: f64,
}

/// Target-domain recall, precision and enrichment for each named selection.
pub fn compare(
    selections: &[(String, SelectionResult)],
    pool_manifest: &Manifest,
    target_domain: &str,
) -> Result<Vec<ComparisonRow>> {
    let pool_total = pool_manifest.total_hours();
    let pool_target: f64 = pool_manifest
        .utterances
        .iter()
        .filter(|u| u.domain_tag == target_domain)
        .map(|u| u.hours())
        .sum();
    if pool_target <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "target domain {target_domain:?} has no hours in the pool"
        )));
    }
    let share = pool_target / pool_total;
    selections
        .iter()
        .map(|(name, sel)| {
            let comp = report(sel, pool_manifest)?;
            let target = comp.row(target_domain).map_or(0.0, |r| r.selected_hours);
            let hours = comp.total_selected_hours;
            let precision = if hours > 0.0 { target / hours } else { 0.0 };
            Ok(ComparisonRow {
                name: name.clone(),
                hours,
                recall: target / pool_target,
                precision,
                enrichment: precision / share,
            })
        })
        .collect()
}

pub fn render_comparison(rows: &[ComparisonRow], target_domain: &str) -> String {
    let width = rows.iter().map(|r| r.name.len()).chain([9]).max().unwrap();
    let mut s = String::new();
    let _ = writeln!(s, "target domain: {target_domain}");
    let _ = writeln!(
        s,
        "{:<width$}  {:>10}  {:>8}  {:>9}  {:>10}",
        "Selection", "Hours", "Recall", "Precision", "Enrichment"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.3}  {:>8.3}  {:>9.3}  {:>10.3}",
            r.name, r.hours, r.recall, r.precision, r.enrichment
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Role, Utterance};
    use crate::selector::{random_select, SelectedUtterance, StopReason};

    fn pool() -> Manifest {
        let mut utts = Vec::new();
        for (tag, n, secs) in [("meeting", 4, 1800.0), ("talks", 6, 3600.0), ("media", 3, 900.0)] {
            for i in 0..n {
                utts.push(Utterance {
                    id: format!("{tag}{i}"),
                    feature_path: "f".into(),
                    num_frames: 1,
                    frame_dim: 1,
                    duration_s: secs,
                    domain_tag: tag.into(),
                    transcript_path: None,
                });
            }
        }
        Manifest::new(Role::Pool, utts)
    }

    fn sel(ids: &[String], m: &Manifest) -> SelectionResult {
        SelectionResult {
            total_hours: ids.iter().map(|i| m.get(i).unwrap().hours()).sum(),
            selected: ids
                .iter()
                .map(|i| SelectedUtterance {
                    utt_id: i.clone(),
                    centroid: None,
                    distance: None,
                    pass_index: 1,
                })
                .collect(),
            passes: 1,
            stop: StopReason::NoProgress,
        }
    }

    #[test]
    fn empty_selection_reports_zeros() {
        let m = pool();
        let r = report(&sel(&[], &m), &m).unwrap();
        assert_eq!(r.total_selected_hours, 0.0);
        assert!(r.rows.iter().all(|row| row.selected_hours == 0.0 && row.percent == 0.0));
        assert!((r.total_pool_hours - 8.75).abs() < 1e-12);
    }

    #[test]
    fn full_selection_is_all_hundreds() {
        let m = pool();
        let ids: Vec<String> = m.utterances.iter().map(|u| u.id.clone()).collect();
        let r = report(&sel(&ids, &m), &m).unwrap();
        assert!(r.rows.iter().all(|row| (row.percent - 100.0).abs() < 1e-9));
        let text = r.render();
        assert!(text.contains("100.0%"));
        assert!(text.lines().last().unwrap().starts_with("Total"));
        assert!(r.to_tsv().starts_with("domain\tselected_hours"));
    }

    #[test]
    fn conservation_and_ordering() {
        let m = pool();
        let ids: Vec<String> = ["meeting0", "meeting1", "talks3", "media2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let s = sel(&ids, &m);
        let r = report(&s, &m).unwrap();
        assert!((r.total_selected_hours - s.total_hours).abs() < 1e-6);
        assert_eq!(r.rows[0].domain, "meeting");
        assert!((r.row("meeting").unwrap().percent - 50.0).abs() < 1e-9);
        for row in &r.rows {
            assert!(row.selected_hours <= row.pool_hours);
        }
        let unknown = sel(&[], &m);
        let mut bad = unknown.clone();
        bad.selected.push(SelectedUtterance {
            utt_id: "ghost".into(),
            centroid: None,
            distance: None,
            pass_index: 1,
        });
        assert!(report(&bad, &m).is_err());
    }

    #[test]
    fn comparison_examples() {
        let m = pool();
        let all: Vec<String> = m.utterances.iter().map(|u| u.id.clone()).collect();
        let meetings: Vec<String> = (0..4).map(|i| format!("meeting{i}")).collect();
        let rows = compare(
            &[
                ("all".into(), sel(&all, &m)),
                ("target".into(), sel(&meetings, &m)),
            ],
            &m,
            "meeting",
        )
        .unwrap();
        assert!((rows[0].recall - 1.0).abs() < 1e-12);
        assert!((rows[0].enrichment - 1.0).abs() < 1e-12);
        assert!((rows[1].precision - 1.0).abs() < 1e-12);
        assert!((rows[1].recall - 1.0).abs() < 1e-12);
        assert!(render_comparison(&rows, "meeting").contains("Enrichment"));
        assert!(compare(&[], &m, "nothing").is_err());
    }

    #[test]
    fn random_selection_is_not_enriched() {
        // 1000 equal-length utterances, 20% target. At a 20% budget the
        // selected target count is hypergeometric with sd ~ sqrt(200*.2*.8*.8)
        // ~ 5.1 utterances, i.e. enrichment sd ~ 0.128.
        let mut utts = Vec::new();
        for i in 0..1000 {
            utts.push(Utterance {
                id: format!("u{i:04}"),
                feature_path: "f".into(),
                num_frames: 1,
                frame_dim: 1,
                duration_s: 36.0,
                domain_tag: if i % 5 == 0 { "target" } else { "other" }.into(),
                transcript_path: None,
            });
        }
        let m = Manifest::new(Role::Pool, utts);
        let budget = 0.2 * m.total_hours();
        let runs: Vec<(String, SelectionResult)> = (0..20)
            .map(|s| (format!("r{s}"), random_select(&m, budget, s).unwrap()))
            .collect();
        let rows = compare(&runs, &m, "target").unwrap();
        for r in &rows {
            assert!((r.enrichment - 1.0).abs() < 4.0 * 0.128, "{r:?}");
        }
        let mean = rows.iter().map(|r| r.enrichment).sum::<f64>() / rows.len() as f64;
        assert!((mean - 1.0).abs() < 4.0 * 0.128 / (rows.len() as f64).sqrt());
    }
}
