use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bdonset::cohort::{
    apply_cohort_file, apply_diagnosis_labels, default_time_keywords, language_activity_filter, mark_regular_cohort,
    minimum_keyword_search, parse_keyword_list, read_labels, time_keyword_filter, write_cohort, write_labels,
    write_review_worklist, KeywordFilter, MatchMode,
};
use bdonset::corpus::{format_timestamp, load_corpus, write_corpus, Corpus, Group};
use bdonset::dataset::Dataset;
use bdonset::features::{featurize, Family, Variant, VARIANTS};
use bdonset::forest::{cross_validate, permuted_labels, train, CvReport, ForestModel};
use bdonset::prodrome::{
    emit_timeline_artifacts, file_stem, locate_prodrome, onset_timeline, read_timeline_csv, write_timeline_csv,
};
use bdonset::synth;
use bdonset::textfeat::TfidfState;
use bdonset::windows::months;
use chrono::Duration;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::{CliError, Command, Result};

/// Folds command-line flags into the configuration; flags win over the file.
pub fn apply_overrides(cfg: &mut PipelineConfig, command: &Command) {
    fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    let p = &mut cfg.paths;
    match command {
        Command::Ingest(a) => set(&mut p.corpus, &a.corpus),
        Command::Filter(a) => {
            set(&mut p.corpus, &a.corpus);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut p.time_keywords, &a.time_keywords);
        }
        Command::Label(a) => {
            set(&mut p.corpus, &a.corpus);
            set(&mut p.labels, &a.labels);
            set(&mut p.regular, &a.regular);
            set(&mut p.out_dir, &a.out_dir);
        }
        Command::Featurize(a) => {
            set(&mut p.corpus, &a.cohort.corpus);
            set(&mut p.cohort, &a.cohort.cohort);
            set(&mut p.labels, &a.cohort.labels);
            set(&mut p.regular, &a.cohort.regular);
            set(&mut p.out_dir, &a.out_dir);
            if !a.alpha.is_empty() {
                cfg.windows.alphas = a.alpha.clone();
            }
        }
        Command::Train(a) => {
            set(&mut p.model, &a.model);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.seed, &a.seed);
            if let Some(m) = a.alpha {
                cfg.windows.alpha_months = m;
            }
        }
        Command::Cv(a) => {
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.seed, &a.seed);
            if let Some(m) = a.alpha {
                cfg.windows.alpha_months = m;
            }
            if let Some(k) = a.k {
                cfg.cv.k = k;
            }
        }
        Command::Timeline(a) => {
            set(&mut p.corpus, &a.cohort.corpus);
            set(&mut p.cohort, &a.cohort.cohort);
            set(&mut p.labels, &a.cohort.labels);
            set(&mut p.regular, &a.cohort.regular);
            set(&mut p.model, &a.model);
            set(&mut p.out_dir, &a.out_dir);
            if let Some(m) = a.alpha {
                cfg.windows.alpha_months = m;
            }
            if let Some(s) = a.step_days {
                cfg.windows.step_days = s;
            }
        }
        Command::Prodrome(a) => {
            set(&mut p.out_dir, &a.out_dir);
            if let Some(l) = a.lower {
                cfg.prodrome.lower = l;
            }
            if let Some(u) = a.upper {
                cfg.prodrome.upper = u;
            }
            if a.clear_below_lower {
                cfg.prodrome.clear_below_lower = true;
            }
        }
        Command::Synth(a) => {
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.seed, &a.seed);
            if let Some(n) = a.n_bipolar {
                cfg.synth.n_bipolar = n;
            }
            if let Some(n) = a.n_regular {
                cfg.synth.n_regular = n;
            }
            if let Some(d) = a.span_days {
                cfg.synth.span_days = d;
            }
        }
        Command::Report(a) => {
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.seed, &a.seed);
            if let Some(k) = a.k {
                cfg.cv.k = k;
            }
        }
    }
}

pub fn dispatch(cfg: &PipelineConfig, command: &Command) -> Result<()> {
    match command {
        Command::Ingest(_) => ingest(cfg),
        Command::Filter(a) => filter(cfg, &a.keywords),
        Command::Label(_) => label(cfg),
        Command::Featurize(_) => featurize_cmd(cfg),
        Command::Train(a) => train_cmd(cfg, a.features.as_deref(), &a.variant),
        Command::Cv(a) => cv_cmd(cfg, a.features.as_deref(), &a.variant, a.shuffle_labels, a.out.as_deref()),
        Command::Timeline(a) => timeline(cfg, a.tfidf.as_deref(), &a.users, a.group.as_deref()),
        Command::Prodrome(a) => prodrome(cfg, a.timelines.as_deref()),
        Command::Synth(_) => synth_cmd(cfg),
        Command::Report(a) => report(cfg, a.features_dir.as_deref(), &a.variant, a.out.as_deref()),
    }
}

fn existing(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn required(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match path {
        Some(p) => existing(p),
        None => Err(CliError::Config(format!("{flag} is required"))),
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| bdonset::Error::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| bdonset::Error::io(path, e))?;
    Ok(())
}

fn load(cfg: &PipelineConfig) -> Result<Corpus> {
    let path = required(&cfg.paths.corpus, "--corpus")?;
    let (corpus, report) = load_corpus(&path)?;
    for (line, why) in &report.skipped {
        warn!("{}:{line}: skipped: {why}", path.display());
    }
    for (line, id) in &report.duplicates {
        warn!("{}:{line}: duplicate tweet {id} dropped", path.display());
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok(corpus)
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| bdonset::Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn apply_labels(corpus: &Corpus, path: &Path) -> Result<Corpus> {
    let (labels, bad) = read_labels(path)?;
    for (row, why) in &bad {
        warn!("{}: label row {row} rejected: {why}", path.display());
    }
    let (labeled, report) = apply_diagnosis_labels(corpus, &labels);
    for (row, id, why) in &report.rejected {
        warn!("label row {row} ({id}) rejected: {why}");
    }
    for id in &report.conflicts {
        warn!("conflicting labels for {id}");
    }
    info!("{} diagnosis labels applied", report.applied);
    Ok(labeled)
}

fn apply_regular(corpus: &Corpus, path: &Path) -> Result<Corpus> {
    let ids = read_id_list(path)?;
    let (marked, unknown) = mark_regular_cohort(corpus, &ids)?;
    if !unknown.is_empty() {
        warn!("{} regular ids not in corpus", unknown.len());
    }
    Ok(marked)
}

/// Corpus with cohort groups from `--cohort`, or from `--labels`/`--regular`.
fn load_cohort(cfg: &PipelineConfig) -> Result<Corpus> {
    let corpus = load(cfg)?;
    let p = &cfg.paths;
    if let Some(c) = &p.cohort {
        return Ok(apply_cohort_file(&corpus, existing(c)?)?);
    }
    if p.labels.is_none() && p.regular.is_none() {
        return Err(CliError::Config("--cohort, or --labels and --regular, is required".into()));
    }
    let mut corpus = corpus;
    if let Some(l) = &p.labels {
        corpus = apply_labels(&corpus, &existing(l)?)?;
    }
    if let Some(r) = &p.regular {
        corpus = apply_regular(&corpus, &existing(r)?)?;
    }
    Ok(corpus)
}

fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let corpus = load(cfg)?;
    println!("users {} tweets {}", corpus.len(), corpus.tweet_count());
    Ok(())
}

fn filter(cfg: &PipelineConfig, keywords: &[String]) -> Result<()> {
    let corpus = load(cfg)?;
    let dir = out_dir(cfg)?;
    let (kept, report) = language_activity_filter(&corpus);
    for (id, why) in &report.removed {
        info!("removed {id}: {why:?}");
    }
    let filtered_path = dir.join("filtered.jsonl");
    write_corpus(&kept, &filtered_path)?;

    let filter = KeywordFilter::new(keywords.iter(), MatchMode::AllRequired)?;
    let candidates = minimum_keyword_search(&kept, &filter)?;
    let time_keys = match &cfg.paths.time_keywords {
        Some(p) => parse_keyword_list(&fs::read_to_string(p).map_err(|e| bdonset::Error::io(p, e))?),
        None => default_time_keywords(),
    };
    let review = time_keyword_filter(&candidates, &time_keys)?;
    let review_path = dir.join("review.csv");
    write_review_worklist(&review, &review_path)?;
    println!(
        "kept {} removed {}; {} keyword matches, {} for review -> {}, {}",
        report.kept,
        report.removed.len(),
        candidates.len(),
        review.len(),
        filtered_path.display(),
        review_path.display()
    );
    Ok(())
}

fn label(cfg: &PipelineConfig) -> Result<()> {
    let mut corpus = load(cfg)?;
    let labels = required(&cfg.paths.labels, "--labels")?;
    corpus = apply_labels(&corpus, &labels)?;
    if let Some(r) = &cfg.paths.regular {
        corpus = apply_regular(&corpus, &existing(r)?)?;
    }
    let path = out_dir(cfg)?.join("cohort.csv");
    write_cohort(&corpus, &path)?;
    println!(
        "bipolar {} regular {} unlabeled {} -> {}",
        corpus.users_in(Group::Bipolar).count(),
        corpus.users_in(Group::Regular).count(),
        corpus.users_in(Group::Unlabeled).count(),
        path.display()
    );
    Ok(())
}

fn features_file(dir: &Path, alpha: u32) -> PathBuf {
    dir.join(format!("features_a{alpha}m.csv"))
}

fn tfidf_file(dir: &Path, alpha: u32) -> PathBuf {
    dir.join(format!("tfidf_a{alpha}m.json"))
}

fn featurize_cmd(cfg: &PipelineConfig) -> Result<()> {
    let corpus = load_cohort(cfg)?;
    let extractor = cfg.extractor()?;
    let dir = out_dir(cfg)?;
    for &alpha in &cfg.windows.alphas {
        let f = featurize(&corpus, months(alpha), &extractor)?;
        let path = features_file(&dir, alpha);
        f.dataset.write_csv(&path)?;
        f.tfidf.save(tfidf_file(&dir, alpha))?;
        let (pos, neg) = f.dataset.class_counts();
        println!(
            "alpha {alpha}m: {} users ({pos} bipolar, {neg} regular), {} skipped, phoneme coverage {:.3} -> {}",
            f.dataset.len(),
            f.skipped_empty.len(),
            f.coverage.fraction(),
            path.display()
        );
    }
    Ok(())
}

fn read_features(cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<Dataset> {
    let path = match explicit {
        Some(p) => existing(p)?,
        None => existing(&features_file(&cfg.out_dir(), cfg.windows.alpha_months))?,
    };
    Ok(Dataset::read_csv(path)?)
}

fn model_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.model.clone().unwrap_or_else(|| cfg.out_dir().join("model.json"))
}

fn train_cmd(cfg: &PipelineConfig, features: Option<&Path>, variant: &str) -> Result<()> {
    let data = read_features(cfg, features)?;
    let variant: Variant = variant.parse()?;
    let seed = cfg.require_seed()?;
    let params = cfg.forest.params()?;
    let selected = variant.select(&data)?;
    let model = train(&selected, &params, seed)?;
    let path = model_path(cfg);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| bdonset::Error::io(parent, e))?;
    }
    model.save(&path)?;
    println!(
        "{variant}: {} trees on {} users x {} features -> {}",
        model.trees.len(),
        selected.len(),
        selected.dims(),
        path.display()
    );
    Ok(())
}

fn variants(names: &[String]) -> Result<Vec<Variant>> {
    if names.is_empty() {
        return Ok(VARIANTS.to_vec());
    }
    Ok(names.iter().map(|n| n.parse()).collect::<bdonset::Result<_>>()?)
}

#[derive(Serialize)]
struct VariantCv {
    variant: String,
    dims: usize,
    #[serde(flatten)]
    report: CvReport,
}

#[derive(Serialize)]
struct CvFile {
    alpha_months: u32,
    k: usize,
    seed: u64,
    shuffled_labels: bool,
    positives: usize,
    negatives: usize,
    variants: Vec<VariantCv>,
}

fn run_cv(cfg: &PipelineConfig, data: &Dataset, vs: &[Variant], shuffle: bool, seed: u64) -> Result<Vec<VariantCv>> {
    let params = cfg.forest.params()?;
    let data = if shuffle {
        data.with_labels(&permuted_labels(&data.labels(), seed))?
    } else {
        data.clone()
    };
    vs.iter()
        .map(|v| {
            let selected = v.select(&data)?;
            let report = cross_validate(&selected, cfg.cv.k, &params, seed)?;
            Ok(VariantCv {
                variant: v.name.to_string(),
                dims: selected.dims(),
                report,
            })
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(bdonset::Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn cv_cmd(
    cfg: &PipelineConfig,
    features: Option<&Path>,
    names: &[String],
    shuffle: bool,
    out: Option<&Path>,
) -> Result<()> {
    let data = read_features(cfg, features)?;
    let vs = variants(names)?;
    let seed = cfg.require_seed()?;
    let results = run_cv(cfg, &data, &vs, shuffle, seed)?;
    for r in &results {
        println!(
            "{:<14} dims {:>4}  precision {:.3}  recall {:.3}",
            r.variant, r.dims, r.report.mean_precision, r.report.mean_recall
        );
    }
    let (positives, negatives) = data.class_counts();
    let alpha = cfg.windows.alpha_months;
    let file = CvFile {
        alpha_months: alpha,
        k: cfg.cv.k,
        seed,
        shuffled_labels: shuffle,
        positives,
        negatives,
        variants: results,
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(format!("cv_a{alpha}m.json")),
    };
    write_json(&path, &file)
}

fn timeline(cfg: &PipelineConfig, tfidf: Option<&Path>, users: &[String], group: Option<&str>) -> Result<()> {
    let corpus = load_cohort(cfg)?;
    let model = ForestModel::load(existing(&model_path(cfg))?)?;
    let alpha = cfg.windows.alpha_months;
    let needs_tfidf = model.schema.iter().any(|c| Family::of_column(c) == Some(Family::Tfidf));
    let tfidf = match (tfidf, needs_tfidf) {
        (Some(p), _) => Some(TfidfState::load(existing(p)?)?),
        (None, true) => Some(TfidfState::load(existing(&tfidf_file(&cfg.out_dir(), alpha))?)?),
        (None, false) => None,
    };
    let group: Option<Group> = group.map(str::parse).transpose()?;
    let selected: Vec<_> = if users.is_empty() {
        corpus
            .users()
            .filter(|u| match group {
                Some(g) => u.group() == g,
                None => u.group() != Group::Unlabeled,
            })
            .collect()
    } else {
        users
            .iter()
            .map(|id| corpus.user(id).ok_or_else(|| bdonset::Error::UnknownUser(id.clone())))
            .collect::<bdonset::Result<_>>()?
    };
    if selected.is_empty() {
        return Err(CliError::Config("no users selected for timelines".into()));
    }
    let extractor = cfg.extractor()?;
    let dir = out_dir(cfg)?;
    let step = Duration::days(cfg.windows.step_days);
    let timelines = selected
        .par_iter()
        .map(|u| onset_timeline(u, &model, &extractor, tfidf.as_ref(), months(alpha), step))
        .collect::<bdonset::Result<Vec<_>>>()?;
    for t in &timelines {
        let path = dir.join(format!("timeline_{}.csv", file_stem(&t.user_id)));
        let f = fs::File::create(&path).map_err(|e| bdonset::Error::io(&path, e))?;
        write_timeline_csv(t, std::io::BufWriter::new(f))?;
    }
    println!("{} timelines -> {}", timelines.len(), dir.display());
    Ok(())
}

fn prodrome(cfg: &PipelineConfig, timelines: Option<&Path>) -> Result<()> {
    let src = timelines.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir());
    let src = existing(&src)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&src)
        .map_err(|e| bdonset::Error::io(&src, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("timeline_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::MissingFile(src.join("timeline_*.csv")));
    }
    let dir = out_dir(cfg)?;
    let bounds = cfg.prodrome;
    let mut w = csv::Writer::from_path(dir.join("intervals.csv")).map_err(bdonset::Error::from)?;
    w.write_record([
        "user_id",
        "interval_id",
        "first_window",
        "last_window",
        "trigger_window",
        "interval_start",
        "interval_end",
        "trigger_end",
    ])
    .map_err(bdonset::Error::from)?;
    let mut total = 0;
    for path in &files {
        let t = read_timeline_csv(path)?;
        let intervals = locate_prodrome(&t.probabilities(), &bounds)?;
        emit_timeline_artifacts(&t, &intervals, &bounds, &dir)?;
        for (n, iv) in intervals.iter().enumerate() {
            let (start, end) = iv.span(&t);
            w.write_record([
                t.user_id.clone(),
                (n + 1).to_string(),
                (iv.members[0] + 1).to_string(),
                (iv.members.last().unwrap() + 1).to_string(),
                (iv.trigger + 1).to_string(),
                format_timestamp(&start),
                format_timestamp(&end),
                format_timestamp(&t.points[iv.trigger].end),
            ])
            .map_err(bdonset::Error::from)?;
        }
        total += intervals.len();
    }
    w.flush().map_err(|e| bdonset::Error::io(dir.join("intervals.csv"), e))?;
    println!("{} timelines, {total} prodromal intervals -> {}", files.len(), dir.display());
    Ok(())
}

fn synth_cmd(cfg: &PipelineConfig) -> Result<()> {
    let mut sc = cfg.synth.clone();
    sc.seed = cfg.require_seed()?;
    let cohort = synth::generate(&sc)?;
    let dir = out_dir(cfg)?;
    write_corpus(&cohort.corpus, dir.join("corpus.jsonl"))?;
    write_labels(&cohort.labels, dir.join("labels.csv"))?;
    let mut regular = cohort.regular_ids.join("\n");
    regular.push('\n');
    write_text(&dir.join("regular.txt"), &regular)?;
    println!(
        "{} bipolar, {} regular, {} tweets, diagnosis {} -> {}",
        cohort.labels.len(),
        cohort.regular_ids.len(),
        cohort.corpus.tweet_count(),
        format_timestamp(&cohort.tau),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportFile {
    k: usize,
    seed: u64,
    /// variant -> alpha (months) -> mean precision; absent tables are omitted.
    precision: BTreeMap<String, BTreeMap<u32, f64>>,
    dims: BTreeMap<String, BTreeMap<u32, usize>>,
}

fn report(cfg: &PipelineConfig, features_dir: Option<&Path>, names: &[String], out: Option<&Path>) -> Result<()> {
    let seed = cfg.require_seed()?;
    let vs = variants(names)?;
    let src = features_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir());
    let alphas = &cfg.windows.alphas;
    let mut grid: BTreeMap<(usize, u32), (f64, usize)> = BTreeMap::new();
    let mut found = 0;
    for &alpha in alphas {
        let path = features_file(&src, alpha);
        if !path.exists() {
            warn!("{} not found; column left empty", path.display());
            continue;
        }
        found += 1;
        let data = Dataset::read_csv(&path)?;
        for (i, r) in run_cv(cfg, &data, &vs, false, seed)?.into_iter().enumerate() {
            grid.insert((i, alpha), (r.report.mean_precision, r.dims));
        }
    }
    if found == 0 {
        return Err(CliError::MissingFile(features_file(&src, alphas[0])));
    }

    let mut md = String::from("# Onset prediction precision\n\n");
    md.push_str(&format!(
        "Mean precision over {}-fold cross-validation (seed {seed}), by feature variant and onset window length.\n\n",
        cfg.cv.k
    ));
    md.push_str("| Variant |");
    for a in alphas {
        md.push_str(&format!(" {a} months |"));
    }
    md.push_str("\n|---|");
    for _ in alphas {
        md.push_str("---:|");
    }
    md.push('\n');
    let mut file = ReportFile {
        k: cfg.cv.k,
        seed,
        precision: BTreeMap::new(),
        dims: BTreeMap::new(),
    };
    for (i, v) in vs.iter().enumerate() {
        md.push_str(&format!("| {} |", v.name));
        for &a in alphas {
            match grid.get(&(i, a)) {
                Some(&(p, d)) => {
                    md.push_str(&format!(" {p:.3} |"));
                    file.precision.entry(v.name.to_string()).or_default().insert(a, p);
                    file.dims.entry(v.name.to_string()).or_default().insert(a, d);
                }
                None => md.push_str(" n/a |"),
            }
        }
        md.push('\n');
    }

    let md_path = match out {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join("report.md"),
    };
    write_text(&md_path, &md)?;
    write_json(&md_path.with_extension("json"), &file)?;
    print!("{md}");
    Ok(())
}
