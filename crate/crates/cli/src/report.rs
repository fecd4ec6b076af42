//! The analysis bundle: every section is computed by the stats crate and only
//! formatted here.

use std::path::{Path, PathBuf};

use purrfect_core::datastore::{self, SessionFile};
use purrfect_core::session::Condition;
use purrfect_stats::descriptive::BoxStats;
use purrfect_stats::glmm::CoefRow;
use purrfect_stats::{
    filter_response_times, fit_glmm, guess_distributions, marginal_predictions, pre_post_test, prediction_curve,
    questionnaire_scores, spatial_summary, Estimate, FilterReport, GlmmFit, GlmmSpec, GuessDistribution, ItemSummary,
    MarginalMode, MarginalSummary, ModelFrame, ObservationTable, Phase, PrePostResult, SpatialSummary, StatsError,
    TTestKind,
};
use serde::Serialize;

use crate::error::CliError;
use crate::svg;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyzeOptions {
    pub marginal_mode: MarginalMode,
    pub ttest: TTestKind,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section<T> {
    pub present: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absent_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<T>,
}

impl<T> Section<T> {
    fn from_result(section: &str, r: Result<T, StatsError>) -> Self {
        match r {
            Ok(data) => Section { present: true, absent_reason: None, data: Some(data) },
            Err(e) => Self::absent(section, e.to_string()),
        }
    }

    fn absent(section: &str, reason: String) -> Self {
        tracing::warn!(section, %reason, "report section absent");
        Section { present: false, absent_reason: Some(reason), data: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub haptic: u8,
    pub trial: u32,
    pub prediction: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub spec: GlmmSpec,
    pub fit: GlmmFit,
    pub coefficients: Vec<CoefRow>,
    pub marginal: MarginalSummary,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseTimeSection {
    pub filter: FilterReport,
    pub model: ModelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub participant_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub records: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub software_version: String,
    pub marginal_mode: MarginalMode,
    pub ttest: TTestKind,
    pub observations: usize,
    pub sessions: Vec<SessionInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub spatial: Section<SpatialSummary>,
    pub accuracy: Section<ModelSection>,
    pub response_time: Section<ResponseTimeSection>,
    pub pre_post: Section<PrePostResult>,
    pub guess_distributions: Section<Vec<GuessDistribution>>,
    pub questionnaire: Section<Vec<ItemSummary>>,
}

fn model_section(table: &ObservationTable, spec: GlmmSpec, mode: MarginalMode) -> Result<ModelSection, StatsError> {
    let frame = ModelFrame::from_table(table, &spec)?;
    let fit = fit_glmm(table, &spec)?;
    let marginal = marginal_predictions(&fit, &frame, mode);
    let last = table.rows.iter().map(|r| r.trial_number).max().unwrap_or(0);
    let trials: Vec<f64> = (1..=last).map(f64::from).collect();
    let mut curve = Vec::new();
    for haptic in [0u8, 1] {
        for (t, prediction) in (1..=last).zip(prediction_curve(&fit, mode, haptic, &trials)) {
            curve.push(CurvePoint { haptic, trial: t, prediction });
        }
    }
    Ok(ModelSection { coefficients: fit.coef_table(), spec, fit, marginal, curve })
}

pub fn analyze(sessions: &[SessionFile], opts: AnalyzeOptions) -> Result<(ReportBundle, ObservationTable), CliError> {
    let table = datastore::observations(sessions)?;
    let training = table.filter_phase(Phase::Training);

    let ratings = datastore::spatial_ratings(sessions);
    let spatial = if ratings.is_empty() {
        Section::absent("spatial", "no audio-haptic participant completed the spatial task".into())
    } else {
        Section::from_result("spatial", spatial_summary(&ratings))
    };

    let accuracy = Section::from_result("accuracy", model_section(&training, GlmmSpec::accuracy(), opts.marginal_mode));

    let (kept, filter) = filter_response_times(&training);
    let response_time = Section::from_result(
        "response_time",
        model_section(&kept, GlmmSpec::response_time(), opts.marginal_mode)
            .map(|model| ResponseTimeSection { filter, model }),
    );

    let pre_post = Section::from_result("pre_post", pre_post_test(&table, opts.ttest));
    let tests = ObservationTable { rows: table.rows.iter().filter(|r| r.phase != Phase::Training).cloned().collect() };
    let guess = if tests.is_empty() {
        Section::absent("guess_distributions", "no pre-test or post-test trials".into())
    } else {
        Section::from_result("guess_distributions", Ok(guess_distributions(&tests)))
    };

    let answers = datastore::q2_answers(sessions);
    let questionnaire = if answers.is_empty() {
        Section::absent("questionnaire", "no Q2 answers".into())
    } else {
        Section::from_result("questionnaire", questionnaire_scores(&answers, opts.ttest))
    };

    let provenance = Provenance {
        software_version: crate::study::SOFTWARE_VERSION.to_string(),
        marginal_mode: opts.marginal_mode,
        ttest: opts.ttest,
        observations: table.len(),
        sessions: sessions
            .iter()
            .map(|s| SessionInfo {
                participant_id: s.header.participant_id.clone(),
                condition: s.header.condition,
                seed: s.header.seed,
                records: s.records.len(),
                complete: s.end.is_some(),
            })
            .collect(),
    };
    let bundle = ReportBundle {
        provenance,
        spatial,
        accuracy,
        response_time,
        pre_post,
        guess_distributions: guess,
        questionnaire,
    };
    Ok((bundle, table))
}

pub fn analyze_dir(study_dir: &Path, opts: AnalyzeOptions) -> Result<(ReportBundle, ObservationTable), CliError> {
    let files = datastore::study_files(study_dir)?;
    let sessions = datastore::load_sessions(&files)?;
    analyze(&sessions, opts)
}

fn group_name(haptic: u8) -> &'static str {
    if haptic == 1 {
        "audio_haptic"
    } else {
        "audio_only"
    }
}

struct Out {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out {
    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Serialize)]
struct BoxRow<'a> {
    label: &'a str,
    group: &'a str,
    n: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
    sd: f64,
}

impl<'a> BoxRow<'a> {
    fn new(label: &'a str, group: &'a str, b: &BoxStats) -> Self {
        BoxRow { label, group, n: b.n, min: b.min, q1: b.q1, median: b.median, q3: b.q3, max: b.max, mean: b.mean, sd: b.sd }
    }
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    quantity: &'a str,
    group: &'a str,
    estimate: f64,
    std_error: f64,
    z: f64,
    p_value: f64,
    ci_lower: f64,
    ci_upper: f64,
}

fn estimate_row<'a>(quantity: &'a str, group: &'a str, e: &Estimate) -> EstimateRow<'a> {
    EstimateRow {
        quantity,
        group,
        estimate: e.estimate,
        std_error: e.std_error,
        z: e.z,
        p_value: e.p_value,
        ci_lower: e.ci_lower,
        ci_upper: e.ci_upper,
    }
}

fn write_model(out: &mut Out, prefix: &str, m: &ModelSection) -> Result<(), CliError> {
    out.csv(&format!("{prefix}_coefficients.csv"), m.coefficients.iter())?;
    let mg = &m.marginal;
    let rows = vec![
        estimate_row("prediction", "audio_only", &mg.predictions[0]),
        estimate_row("prediction", "audio_haptic", &mg.predictions[1]),
        estimate_row("contrast", "audio_haptic_minus_audio_only", &mg.contrast),
        estimate_row("slope", "audio_only", &mg.slopes[0]),
        estimate_row("slope", "audio_haptic", &mg.slopes[1]),
    ];
    out.csv(&format!("{prefix}_marginal.csv"), rows)?;
    #[derive(Serialize)]
    struct Row<'a> {
        group: &'a str,
        trial: u32,
        estimate: f64,
        ci_lower: f64,
        ci_upper: f64,
    }
    out.csv(
        &format!("{prefix}_curve.csv"),
        m.curve.iter().map(|c| Row {
            group: group_name(c.haptic),
            trial: c.trial,
            estimate: c.prediction.estimate,
            ci_lower: c.prediction.ci_lower,
            ci_upper: c.prediction.ci_upper,
        }),
    )
}

/// Writes `report.json`, the CSV tables and, if asked, SVG plots. Output is a
/// pure function of the bundle.
pub fn write_bundle(
    bundle: &ReportBundle,
    table: &ObservationTable,
    out_dir: &Path,
    svg_plots: bool,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut out = Out { dir: out_dir.to_path_buf(), written: Vec::new() };
    out.text(REPORT_FILE, &(serde_json::to_string_pretty(bundle).expect("bundle serializes") + "\n"))?;

    let path = out_dir.join("observations.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    table.write_csv(file)?;
    out.written.push(path);

    if let Some(s) = &bundle.spatial.data {
        let labels: Vec<String> = s.by_distance.iter().map(|d| d.distance.to_string()).collect();
        out.csv(
            "spatial_by_distance.csv",
            s.by_distance.iter().zip(&labels).filter_map(|(d, l)| d.stats.as_ref().map(|b| BoxRow::new(l, "audio_haptic", b))),
        )?;
        #[derive(Serialize)]
        struct Ref {
            distance: u8,
            ground_truth: f64,
        }
        out.csv(
            "spatial_ground_truth.csv",
            s.by_distance.iter().map(|d| Ref { distance: d.distance, ground_truth: d.ground_truth }),
        )?;
        #[derive(Serialize)]
        struct Norm<'a> {
            participant_id: &'a str,
            module: usize,
            raw: f64,
            normalized: f64,
        }
        out.csv(
            "spatial_normalized.csv",
            s.participants.iter().flat_map(|p| {
                p.raw.iter().zip(&p.normalized).enumerate().map(move |(i, (r, n))| Norm {
                    participant_id: &p.participant_id,
                    module: i + 1,
                    raw: *r,
                    normalized: *n,
                })
            }),
        )?;
        if svg_plots {
            let boxes: Vec<(String, BoxStats)> =
                s.by_distance.iter().filter_map(|d| Some((d.distance.to_string(), d.stats?))).collect();
            let reference: Vec<f64> = s.by_distance.iter().map(|d| d.ground_truth).collect();
            out.text("spatial.svg", &svg::box_plot("Normalized perceived distance", &boxes, Some(&reference)))?;
        }
    }

    if let Some(m) = &bundle.accuracy.data {
        write_model(&mut out, "accuracy", m)?;
    }
    if let Some(rt) = &bundle.response_time.data {
        write_model(&mut out, "response_time", &rt.model)?;
        #[derive(Serialize)]
        struct F {
            n_input: usize,
            floor_s: f64,
            n_below_floor: usize,
            threshold_s: Option<f64>,
            n_above_threshold: usize,
            n_kept: usize,
        }
        let f = &rt.filter;
        out.csv(
            "response_time_filter.csv",
            [F {
                n_input: f.n_input,
                floor_s: f.floor_s,
                n_below_floor: f.n_below_floor,
                threshold_s: f.threshold_s,
                n_above_threshold: f.n_above_threshold,
                n_kept: f.n_kept,
            }],
        )?;
    }
    if svg_plots {
        for (name, title, section) in [
            ("accuracy.svg", "Predicted probability correct", bundle.accuracy.data.as_ref()),
            ("response_time.svg", "Predicted response time (s)", bundle.response_time.data.as_ref().map(|r| &r.model)),
        ] {
            if let Some(m) = section {
                let series: Vec<(String, Vec<(f64, f64)>)> = [0u8, 1]
                    .iter()
                    .map(|&h| {
                        let pts = m.curve.iter().filter(|c| c.haptic == h).map(|c| (c.trial as f64, c.prediction.estimate)).collect();
                        (group_name(h).to_string(), pts)
                    })
                    .collect();
                out.text(name, &svg::line_plot(title, "trial", &series))?;
            }
        }
    }

    if let Some(pp) = &bundle.pre_post.data {
        #[derive(Serialize)]
        struct P<'a> {
            participant_id: &'a str,
            group: &'a str,
            pre: f64,
            post: f64,
            delta: f64,
        }
        out.csv(
            "pre_post_participants.csv",
            pp.participants.iter().map(|p| P {
                participant_id: &p.participant_id,
                group: group_name(p.haptic),
                pre: p.pre,
                post: p.post,
                delta: p.delta,
            }),
        )?;
        #[derive(Serialize)]
        struct G<'a> {
            group: &'a str,
            measure: &'a str,
            n: usize,
            mean: f64,
            sd: f64,
            ci_lower: f64,
            ci_upper: f64,
        }
        out.csv(
            "pre_post_groups.csv",
            pp.groups.iter().flat_map(|g| {
                [("pre", &g.pre), ("post", &g.post), ("delta", &g.delta)].map(|(m, c)| G {
                    group: group_name(g.haptic),
                    measure: m,
                    n: c.n,
                    mean: c.mean,
                    sd: c.sd,
                    ci_lower: c.ci_lower,
                    ci_upper: c.ci_upper,
                })
            }),
        )?;
        out.csv("pre_post_test.csv", [&pp.test])?;
    }

    if let Some(gd) = &bundle.guess_distributions.data {
        #[derive(Serialize)]
        struct R<'a> {
            group: &'a str,
            phase: Phase,
            interval: usize,
            response: usize,
            count: u32,
        }
        out.csv(
            "guess_distributions.csv",
            gd.iter().flat_map(|d| {
                d.counts.iter().enumerate().flat_map(move |(i, row)| {
                    row.iter().enumerate().map(move |(j, &count)| R {
                        group: group_name(d.haptic),
                        phase: d.phase,
                        interval: i + 1,
                        response: j + 1,
                        count,
                    })
                })
            }),
        )?;
    }

    if let Some(items) = &bundle.questionnaire.data {
        let mut rows = Vec::new();
        for it in items {
            for (group, stats) in [("audio_only", &it.audio), ("audio_haptic", &it.haptic)] {
                if let Some(b) = stats {
                    rows.push(BoxRow::new(it.item.key(), group, b));
                }
            }
        }
        out.csv("questionnaire_scores.csv", rows)?;
        #[derive(Serialize)]
        struct T<'a> {
            item: &'a str,
            inverted: bool,
            mean_diff: Option<f64>,
            t: Option<f64>,
            df: Option<f64>,
            p_value: Option<f64>,
        }
        out.csv(
            "questionnaire_tests.csv",
            items.iter().map(|it| T {
                item: it.item.key(),
                inverted: it.inverted,
                mean_diff: it.test.as_ref().map(|t| t.mean_diff),
                t: it.test.as_ref().map(|t| t.t),
                df: it.test.as_ref().map(|t| t.df),
                p_value: it.test.as_ref().map(|t| t.p_value),
            }),
        )?;
        if svg_plots {
            let boxes: Vec<(String, BoxStats)> = items
                .iter()
                .flat_map(|it| {
                    [("A", &it.audio), ("H", &it.haptic)]
                        .into_iter()
                        .filter_map(move |(g, b)| Some((format!("{} {g}", it.item.label()), (*b)?)))
                })
                .collect();
            out.text("questionnaire.svg", &svg::box_plot("Questionnaire scores (higher is better)", &boxes, None))?;
        }
    }
    Ok(out.written)
}
