//! Machine-readable reports.
//!
//! Every report renders as compact UTF-8 JSON or as a CSV table. Rendering is
//! a pure function of the analysis result, so equal inputs give equal bytes.

use chanprobe_core::select::SelectionProblem;
use chanprobe_core::{
    ChannelRef, CoverageReport, PairCorrelation, PairCorrelations, SelectionResult, TopKPairs,
    UnexpectednessReport,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ChannelJson {
    pub layer: String,
    pub channel: usize,
}

impl From<&ChannelRef> for ChannelJson {
    fn from(c: &ChannelRef) -> Self {
        Self {
            layer: c.layer_name.clone(),
            channel: c.channel_index,
        }
    }
}

fn triples(pairs: &[PairCorrelation]) -> Vec<(usize, usize, f64)> {
    pairs.iter().map(|p| (p.i, p.j, p.coef)).collect()
}

/// Pair correlations of one layer with their top-k subset.
#[derive(Debug, Serialize)]
pub struct CorrReport {
    pub layer: String,
    pub class: Option<String>,
    pub mode: &'static str,
    pub pairs: Vec<(usize, usize, f64)>,
    pub k_fraction: f64,
    pub topk: Vec<(usize, usize, f64)>,
}

impl CorrReport {
    pub fn new(pc: &PairCorrelations, topk: &TopKPairs, class: Option<String>) -> Self {
        Self {
            layer: pc.layer().name.clone(),
            class,
            mode: pc.mode().as_str(),
            pairs: triples(pc.pairs()),
            k_fraction: topk.k_fraction(),
            topk: triples(topk.pairs()),
        }
    }

    /// Columns `layer,i,j,coef,topk_rank`; the rank is empty outside the
    /// top-k.
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer", "i", "j", "coef", "topk_rank"])?;
        for &(i, j, coef) in &self.pairs {
            let rank = self
                .topk
                .iter()
                .position(|&(a, b, _)| (a, b) == (i, j))
                .map_or(String::new(), |r| (r + 1).to_string());
            w.write_record([
                self.layer.clone(),
                i.to_string(),
                j.to_string(),
                coef.to_string(),
                rank,
            ])?;
        }
        into_bytes(w)
    }
}

#[derive(Debug, Serialize)]
pub struct SelectionReport {
    pub theta: f64,
    pub policy: &'static str,
    pub selected: Vec<ChannelJson>,
    pub covered_fraction: f64,
    pub mode: &'static str,
    pub feasible: bool,
    pub universe_size: usize,
}

impl SelectionReport {
    pub fn new(problem: &SelectionProblem, result: &SelectionResult) -> Self {
        Self {
            theta: problem.theta(),
            policy: result.policy().as_str(),
            selected: result.selected_channels(problem).map(ChannelJson::from).collect(),
            covered_fraction: result.covered_fraction(),
            mode: problem.mode().as_str(),
            feasible: result.feasible(),
            universe_size: problem.len(),
        }
    }

    /// Columns `order,layer,channel` in pick order.
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["order", "layer", "channel"])?;
        for (k, c) in self.selected.iter().enumerate() {
            w.write_record([(k + 1).to_string(), c.layer.clone(), c.channel.to_string()])?;
        }
        into_bytes(w)
    }
}

#[derive(Debug, Serialize)]
pub struct ScoreEntryJson {
    pub layer: String,
    pub channel: usize,
    pub class: String,
    pub raw: f64,
    pub normalized: f64,
    pub rank: usize,
    pub topk_size: usize,
}

#[derive(Debug, Serialize)]
pub struct ChannelScoreJson {
    pub layer: String,
    pub channel: usize,
    pub score: f64,
    pub classes: usize,
    pub rank: usize,
}

#[derive(Debug, Serialize)]
pub struct SkippedJson {
    pub layer: String,
    pub channel: usize,
    pub class: String,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Serialize)]
pub struct ScoreReport {
    pub basis: &'static str,
    pub entries: Vec<ScoreEntryJson>,
    pub k_fraction: f64,
    pub aggregate: &'static str,
    pub channels: Vec<ChannelScoreJson>,
    pub skipped: Vec<SkippedJson>,
}

impl ScoreReport {
    /// `class_names` maps class ids to display names; ids without a name are
    /// printed as numbers.
    pub fn new(report: &UnexpectednessReport, class_names: &[String]) -> Self {
        let name = |id: u32| {
            class_names
                .get(id as usize)
                .cloned()
                .unwrap_or_else(|| id.to_string())
        };
        Self {
            basis: report.basis.as_str(),
            entries: report
                .entries
                .iter()
                .map(|e| ScoreEntryJson {
                    layer: e.channel.layer_name.clone(),
                    channel: e.channel.channel_index,
                    class: name(e.class_id),
                    raw: e.score.raw,
                    normalized: e.score.normalized,
                    rank: e.rank,
                    topk_size: e.score.topk_size,
                })
                .collect(),
            k_fraction: report.k_fraction,
            aggregate: report.aggregate.as_str(),
            channels: report
                .channels
                .iter()
                .map(|c| ChannelScoreJson {
                    layer: c.channel.layer_name.clone(),
                    channel: c.channel.channel_index,
                    score: c.score,
                    classes: c.classes,
                    rank: c.rank,
                })
                .collect(),
            skipped: report
                .skipped
                .iter()
                .map(|s| SkippedJson {
                    layer: s.channel.layer_name.clone(),
                    channel: s.channel.channel_index,
                    class: name(s.class_id),
                    train_rows: s.train_rows,
                    test_rows: s.test_rows,
                })
                .collect(),
        }
    }

    /// Columns `layer,channel,class,rank,raw,normalized`, in rank order.
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer", "channel", "class", "rank", "raw", "normalized"])?;
        for e in &self.entries {
            w.write_record([
                e.layer.clone(),
                e.channel.to_string(),
                e.class.clone(),
                e.rank.to_string(),
                e.raw.to_string(),
                e.normalized.to_string(),
            ])?;
        }
        into_bytes(w)
    }
}

#[derive(Debug, Serialize)]
pub struct BoundJson {
    pub layer: String,
    pub channel: usize,
    pub upper: f64,
    pub test_max: Option<f64>,
    pub covered: bool,
}

#[derive(Debug, Serialize)]
pub struct CoverageJson {
    pub fraction: f64,
    pub covered: Vec<ChannelJson>,
    pub bounds: Vec<BoundJson>,
}

impl CoverageJson {
    pub fn new(report: &CoverageReport) -> Self {
        let covered = report
            .channels()
            .iter()
            .zip(report.covered())
            .filter(|(_, &c)| c)
            .map(|(ch, _)| ChannelJson::from(ch))
            .collect();
        let bounds = report
            .channels()
            .iter()
            .enumerate()
            .map(|(i, ch)| BoundJson {
                layer: ch.layer_name.clone(),
                channel: ch.channel_index,
                upper: report.upper_bounds()[i],
                test_max: report.test_max()[i],
                covered: report.covered()[i],
            })
            .collect();
        Self {
            fraction: report.fraction(),
            covered,
            bounds,
        }
    }

    /// Columns `layer,channel,upper,test_max,covered`.
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer", "channel", "upper", "test_max", "covered"])?;
        for b in &self.bounds {
            w.write_record([
                b.layer.clone(),
                b.channel.to_string(),
                b.upper.to_string(),
                b.test_max.map_or(String::new(), |m| m.to_string()),
                b.covered.to_string(),
            ])?;
        }
        into_bytes(w)
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> csv::Result<Vec<u8>> {
    w.into_inner().map_err(|e| e.into_error().into())
}
