use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use aldasel_core::cluster;
use aldasel_core::config::{DataSource, PipelineConfig};
use aldasel_core::corpus::{self, Manifest, Role};
use aldasel_core::docmodel;
use aldasel_core::lda::{self, LdaModel};
use aldasel_core::pipeline::{self, stage_seed, Artifacts, StageStatus};
use aldasel_core::quantizer::{self, GmmModel};
use aldasel_core::report;
use aldasel_core::selector::{self, SelectedUtterance, SelectionConfig, SelectionResult, StopReason};
use aldasel_core::synth::{self, SynthSpec};
use aldasel_core::{Error, Result};

use crate::{Command, GlobalArgs};

pub fn dispatch(g: &GlobalArgs, command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth_cmd(g, a),
        Command::TrainGmm(a) => train_gmm(&Ctx::new(g)?, a),
        Command::Quantize(a) => quantize(&Ctx::new(g)?, a),
        Command::Tfidf(a) => tfidf(&Ctx::new(g)?, a),
        Command::TrainLda(a) => train_lda(&Ctx::new(g)?, a),
        Command::Posteriors(a) => posteriors(&Ctx::new(g)?, a),
        Command::Cluster(a) => cluster_cmd(&Ctx::new(g)?, a),
        Command::Select(a) => select(&Ctx::new(g)?, a),
        Command::Combine(a) => combine(&Ctx::new(g)?, a),
        Command::RandomSelect(a) => random_select(&Ctx::new(g)?, a),
        Command::Report(a) => report_cmd(&Ctx::new(g)?, a),
        Command::Compare(a) => compare(&Ctx::new(g)?, a),
        Command::Run => run(&Ctx::new(g)?),
        Command::SweepLambda(a) => sweep(&Ctx::new(g)?, a),
    }
}

/// Resolved configuration plus the work-directory layout.
struct Ctx {
    cfg: PipelineConfig,
    art: Artifacts,
}

impl Ctx {
    fn new(g: &GlobalArgs) -> Result<Self> {
        let mut cfg = match &g.config {
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!("config file {} does not exist", p.display())));
            }
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(w) = &g.work_dir {
            cfg.paths.work_dir = w.clone();
        }
        cfg.validate_params()?;
        let art = Artifacts::new(&cfg.paths.work_dir);
        Ok(Self { cfg, art })
    }

    fn manifest(&self, path: &Path, what: &str) -> Result<Manifest> {
        if path.as_os_str().is_empty() {
            return Err(Error::Config(format!("paths.{what} is not set; pass --config")));
        }
        if !path.exists() {
            return Err(Error::Config(format!("{what} {} does not exist", path.display())));
        }
        corpus::read_manifest(path, false)
    }

    fn pool(&self) -> Result<Manifest> {
        self.manifest(&self.cfg.paths.pool_manifest, "pool_manifest")
    }

    fn dev(&self) -> Result<Manifest> {
        self.manifest(&self.cfg.paths.dev_manifest, "dev_manifest")
    }

    fn ensure_work_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.art.root).map_err(|e| Error::InvalidInput(format!("{}: {e}", self.art.root.display())))
    }

    /// Acoustic vocabulary size: the trained GMM's when present, else the
    /// configured one.
    fn vocab_size(&self, explicit: Option<usize>) -> Result<usize> {
        if let Some(v) = explicit {
            return Ok(v);
        }
        if self.art.gmm().exists() {
            return Ok(GmmModel::load(&self.art.gmm())?.n_components());
        }
        Ok(self.cfg.quantizer.n_components)
    }
}

fn or(p: &Option<PathBuf>, default: PathBuf) -> PathBuf {
    p.clone().unwrap_or(default)
}

fn paired(input: &Option<PathBuf>, output: &Option<PathBuf>, flag_in: &str, flag_out: &str) -> Result<()> {
    if input.is_some() != output.is_some() {
        return Err(Error::Config(format!("{flag_in} and {flag_out} must be given together")));
    }
    Ok(())
}

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

/// Reads a selection from an audit file or, failing that, from a selection
/// manifest.
fn load_selection(path: &Path, pool: &Manifest) -> Result<SelectionResult> {
    if !path.exists() {
        return Err(Error::Config(format!("selection {} does not exist", path.display())));
    }
    match selector::read_audit(path, pool) {
        Ok(r) => Ok(r),
        Err(audit_err) => {
            let Ok(m) = corpus::read_manifest(path, false) else {
                return Err(audit_err);
            };
            let mut total = 0.0;
            let selected = m
                .utterances
                .iter()
                .map(|u| {
                    let p = pool
                        .get(&u.id)
                        .ok_or_else(|| Error::InvalidInput(format!("{} is not in the pool manifest", u.id)))?;
                    total += p.hours();
                    Ok(SelectedUtterance {
                        utt_id: u.id.clone(),
                        centroid: None,
                        distance: None,
                        pass_index: 1,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SelectionResult {
                selected,
                total_hours: total,
                passes: 1,
                stop: StopReason::NoProgress,
            })
        }
    }
}

fn write_selection(result: &SelectionResult, pool: &Manifest, manifest: &Path, audit: &Path) -> Result<()> {
    selector::write_selection_manifest(result, pool, manifest)?;
    selector::write_audit(result, audit)?;
    println!(
        "selected {} utterances, {:.3} h ({} passes, stop: {}) -> {}",
        result.len(),
        result.total_hours,
        result.passes,
        result.stop,
        manifest.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives pool/, dev/ and config.toml.
    #[arg(long)]
    out: PathBuf,
    /// Domain names; the first is the in-domain target unless --dev-domain is given.
    #[arg(long, value_delimiter = ',', default_value = "meeting,broadcast,telephone,lecture,farfield")]
    domains: Vec<String>,
    /// Pool utterances per domain.
    #[arg(long, default_value_t = 200)]
    utterances: usize,
    /// Dev utterances, all from the target domain.
    #[arg(long, default_value_t = 50)]
    dev_utterances: usize,
    /// In-domain target; defaults to the first domain.
    #[arg(long)]
    dev_domain: Option<String>,
    /// Gaussian components per domain.
    #[arg(long, default_value_t = 4)]
    components: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 13)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    min_frames: usize,
    #[arg(long, default_value_t = 300)]
    max_frames: usize,
    /// Range of component means; larger values separate domains more.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Full corpus description (TOML) instead of the preset options above.
    #[arg(long)]
    spec: Option<PathBuf>,
}

fn synth_cmd(g: &GlobalArgs, a: SynthArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            SynthSpec::from_toml(&text)?
        }
        None => {
            if a.domains.is_empty() {
                return Err(Error::Config("at least one domain is required".into()));
            }
            if a.min_frames == 0 || a.min_frames > a.max_frames {
                return Err(Error::Config("need 0 < --min-frames <= --max-frames".into()));
            }
            require_positive("--spread", a.spread)?;
            let names: Vec<&str> = a.domains.iter().map(String::as_str).collect();
            SynthSpec::preset(&names, a.utterances, a.components, a.dim, (a.min_frames, a.max_frames), a.spread, seed)
        }
    };
    spec.validate()?;
    let target = a.dev_domain.clone().unwrap_or_else(|| spec.domains[0].name.clone());
    let mut dev = spec.clone();
    dev.domains.retain(|d| d.name == target);
    if dev.domains.is_empty() {
        return Err(Error::Config(format!("dev domain {target:?} is not one of the corpus domains")));
    }
    if a.dev_utterances == 0 {
        return Err(Error::Config("--dev-utterances must be at least 1".into()));
    }
    dev.domains[0].utterances = a.dev_utterances;
    dev.id_prefix = format!("dev_{}", spec.id_prefix);

    let pool = synth::generate_synthetic_corpus(&spec, stage_seed(seed, "synth-pool"), &a.out.join("pool"), Role::Pool)?;
    let devm = synth::generate_synthetic_corpus(&dev, stage_seed(seed, "synth-dev"), &a.out.join("dev"), Role::Dev)?;

    let mut cfg = PipelineConfig::default();
    cfg.seed = seed;
    cfg.paths.pool_manifest = "pool/manifest.tsv".into();
    cfg.paths.dev_manifest = "dev/manifest.tsv".into();
    cfg.paths.work_dir = "work".into();
    cfg.quantizer.n_components = 64;
    cfg.quantizer.max_frames = 20_000;
    cfg.lda.n_topics = 8;
    cfg.cluster.n_clusters = 8;
    cfg.selection.lambda = 0.03;
    cfg.report.target_domain = Some(target.clone());
    cfg.report.random_seeds = (0..5).collect();
    let cfg_path = a.out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::InvalidInput(format!("{}: {e}", cfg_path.display())))?;
    println!(
        "pool: {} utterances ({:.3} h), dev: {} utterances of {target}; config -> {}",
        pool.len(),
        pool.total_hours(),
        devm.len(),
        cfg_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- stages

#[derive(Debug, Args)]
pub struct TrainGmmArgs {
    /// Model output (default: <work-dir>/gmm.bin).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn train_gmm(ctx: &Ctx, a: TrainGmmArgs) -> Result<()> {
    let q = &ctx.cfg.quantizer;
    let mut sets = Vec::new();
    if q.train_on.uses_dev() {
        sets.push(ctx.dev()?);
    }
    if q.train_on.uses_pool() {
        sets.push(ctx.pool()?);
    }
    let refs: Vec<&Manifest> = sets.iter().collect();
    let seed = stage_seed(ctx.cfg.seed, "train-gmm");
    let frames = pipeline::sample_frames(&refs, q.max_frames, seed)?;
    let fit = quantizer::train_gmm(&frames, q.n_components, &q.gmm_config(seed))?;
    ctx.ensure_work_dir()?;
    let out = or(&a.out, ctx.art.gmm());
    fit.model.save(&out)?;
    println!(
        "{} components on {} frames, {} EM iterations, final log-likelihood {:.4} -> {}",
        fit.model.n_components(),
        frames.len(),
        fit.log_likelihoods.len(),
        fit.log_likelihoods.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// GMM model (default: <work-dir>/gmm.bin).
    #[arg(long)]
    gmm: Option<PathBuf>,
    /// Quantize only this manifest (requires --out); default is pool and dev.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn quantize(ctx: &Ctx, a: QuantizeArgs) -> Result<()> {
    paired(&a.manifest, &a.out, "--manifest", "--out")?;
    let gmm = GmmModel::load(&or(&a.gmm, ctx.art.gmm()))?;
    let jobs: Vec<(Manifest, PathBuf)> = match (&a.manifest, &a.out) {
        (Some(m), Some(o)) => vec![(ctx.manifest(m, "manifest")?, o.clone())],
        _ => {
            ctx.ensure_work_dir()?;
            vec![(ctx.pool()?, ctx.art.tokens("pool")), (ctx.dev()?, ctx.art.tokens("dev"))]
        }
    };
    for (m, out) in jobs {
        let docs = pipeline::quantize_manifest(&gmm, &m)?;
        quantizer::write_token_file(&docs, &out)?;
        println!("{} documents -> {}", docs.len(), out.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TfidfArgs {
    #[arg(long)]
    pool_tokens: Option<PathBuf>,
    #[arg(long)]
    dev_tokens: Option<PathBuf>,
    /// Acoustic vocabulary size (default: from the GMM).
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    pool_out: Option<PathBuf>,
    #[arg(long)]
    dev_out: Option<PathBuf>,
}

fn tfidf(ctx: &Ctx, a: TfidfArgs) -> Result<()> {
    let pool = quantizer::read_token_file(&or(&a.pool_tokens, ctx.art.tokens("pool")))?;
    let dev = quantizer::read_token_file(&or(&a.dev_tokens, ctx.art.tokens("dev")))?;
    let v = ctx.vocab_size(a.vocab_size)?;
    let d = &ctx.cfg.docmodel;
    let (wp, wd) = pipeline::weigh_sets(&pool, &dev, v, d.idf_source, d.tf)?;
    ctx.ensure_work_dir()?;
    for (docs, out) in [(wp, or(&a.pool_out, ctx.art.weighted("pool"))), (wd, or(&a.dev_out, ctx.art.weighted("dev")))] {
        docmodel::write_weighted_file(&docs, &out)?;
        println!("{} documents -> {}", docs.len(), out.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainLdaArgs {
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Model output (default: <work-dir>/lda.bin).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_training_docs(source: DataSource, pool: &Path, dev: &Path) -> Result<Vec<docmodel::WeightedDocument>> {
    let mut docs = Vec::new();
    if source.uses_dev() {
        docs.extend(docmodel::read_weighted_file(dev)?);
    }
    if source.uses_pool() {
        docs.extend(docmodel::read_weighted_file(pool)?);
    }
    Ok(docs)
}

fn train_lda(ctx: &Ctx, a: TrainLdaArgs) -> Result<()> {
    let l = &ctx.cfg.lda;
    let docs = read_training_docs(
        l.train_on,
        &or(&a.pool, ctx.art.weighted("pool")),
        &or(&a.dev, ctx.art.weighted("dev")),
    )?;
    let v = ctx.vocab_size(a.vocab_size)?;
    let fit = lda::train_lda(&docs, v, l.n_topics, &l.lda_config(stage_seed(ctx.cfg.seed, "train-lda")))?;
    ctx.ensure_work_dir()?;
    let out = or(&a.out, ctx.art.lda());
    fit.model.save(&out)?;
    println!(
        "{} topics on {} documents, {} EM iterations{} -> {}",
        l.n_topics,
        docs.len(),
        fit.objective.len(),
        if fit.converged { "" } else { " (not converged)" },
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PosteriorsArgs {
    /// LDA model (default: <work-dir>/lda.bin).
    #[arg(long)]
    lda: Option<PathBuf>,
    /// Weighted documents of one set (requires --out); default is pool and dev.
    #[arg(long)]
    weighted: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn posteriors(ctx: &Ctx, a: PosteriorsArgs) -> Result<()> {
    paired(&a.weighted, &a.out, "--weighted", "--out")?;
    let model = LdaModel::load(&or(&a.lda, ctx.art.lda()))?;
    let jobs = match (&a.weighted, &a.out) {
        (Some(w), Some(o)) => vec![(w.clone(), o.clone())],
        _ => ["pool", "dev"]
            .iter()
            .map(|s| (ctx.art.weighted(s), ctx.art.posteriors(s)))
            .collect(),
    };
    for (w, out) in jobs {
        let docs = docmodel::read_weighted_file(&w)?;
        let post = lda::extract_posteriors(&model, &docs, ctx.cfg.lda.infer_options())?;
        lda::write_posterior_file(&post, &out)?;
        println!("{} posteriors -> {}", post.len(), out.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Dev posteriors (default: <work-dir>/dev.post).
    #[arg(long)]
    posteriors: Option<PathBuf>,
    /// Overrides the configured number of clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cluster_cmd(ctx: &Ctx, a: ClusterArgs) -> Result<()> {
    let vectors: Vec<Vec<f64>> = lda::read_posterior_file(&or(&a.posteriors, ctx.art.posteriors("dev")))?
        .into_iter()
        .map(|p| p.gamma)
        .collect();
    let c = a.clusters.unwrap_or(ctx.cfg.cluster.n_clusters);
    let set = cluster::kmeans(&vectors, c, &ctx.cfg.cluster.kmeans_config(stage_seed(ctx.cfg.seed, "cluster")))?;
    let out = or(&a.out, ctx.art.centroids());
    cluster::write_centroids(&set, &out)?;
    println!(
        "{} centroids from {} vectors, inertia {:.6}{} -> {}",
        set.len(),
        vectors.len(),
        set.inertia,
        if set.converged { "" } else { " (not converged)" },
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Pool posteriors (default: <work-dir>/pool.post).
    #[arg(long)]
    posteriors: Option<PathBuf>,
    /// Centroids (default: <work-dir>/centroids.post).
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// Distance threshold; overrides the config.
    #[arg(long)]
    lambda: Option<f64>,
    /// Budget in hours; overrides the config.
    #[arg(long)]
    max_hours: Option<f64>,
    /// Output name inside the work directory.
    #[arg(long, default_value = "acoustic")]
    name: String,
    /// Selection manifest output (default: <work-dir>/<name>.selected.tsv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Audit output (default: <work-dir>/<name>.audit.tsv).
    #[arg(long)]
    audit: Option<PathBuf>,
}

fn select(ctx: &Ctx, a: SelectArgs) -> Result<()> {
    let cfg = SelectionConfig {
        lambda: a.lambda.unwrap_or(ctx.cfg.selection.lambda),
        max_hours: a.max_hours.or(ctx.cfg.selection.max_hours),
    };
    cfg.validate()?;
    let pool = ctx.pool()?;
    let posts = lda::read_posterior_file(&or(&a.posteriors, ctx.art.posteriors("pool")))?;
    let cents = cluster::read_centroids(&or(&a.centroids, ctx.art.centroids()))?;
    let result = selector::select(&posts, &pool, &cents, &cfg)?;
    ctx.ensure_work_dir()?;
    write_selection(
        &result,
        &pool,
        &or(&a.out, ctx.art.selection(&a.name)),
        &or(&a.audit, ctx.art.audit(&a.name)),
    )
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// First selection (audit or manifest; default: acoustic audit).
    first: Option<PathBuf>,
    /// Second selection (default: text audit).
    second: Option<PathBuf>,
    #[arg(long, default_value = "combined")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    audit: Option<PathBuf>,
}

fn combine(ctx: &Ctx, a: CombineArgs) -> Result<()> {
    let pool = ctx.pool()?;
    let x = load_selection(&or(&a.first, ctx.art.audit("acoustic")), &pool)?;
    let y = load_selection(&or(&a.second, ctx.art.audit("text")), &pool)?;
    let u = selector::union_combine(&x, &y, &pool)?;
    ctx.ensure_work_dir()?;
    write_selection(&u, &pool, &or(&a.out, ctx.art.selection(&a.name)), &or(&a.audit, ctx.art.audit(&a.name)))
}

#[derive(Debug, Args)]
pub struct RandomSelectArgs {
    /// Budget in hours.
    #[arg(long, conflicts_with = "match_selection")]
    budget_hours: Option<f64>,
    /// Use the hours of this selection as the budget.
    #[arg(long = "match")]
    match_selection: Option<PathBuf>,
    #[arg(long, default_value = "random")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    audit: Option<PathBuf>,
}

fn random_select(ctx: &Ctx, a: RandomSelectArgs) -> Result<()> {
    let pool = ctx.pool()?;
    let budget = match (a.budget_hours, &a.match_selection) {
        (Some(b), _) => b,
        (None, Some(p)) => load_selection(p, &pool)?.total_hours,
        (None, None) => return Err(Error::Config("give --budget-hours or --match".into())),
    };
    require_positive("budget", budget)?;
    let result = selector::random_select(&pool, budget, ctx.cfg.seed)?;
    ctx.ensure_work_dir()?;
    write_selection(&result, &pool, &or(&a.out, ctx.art.selection(&a.name)), &or(&a.audit, ctx.art.audit(&a.name)))
}

// ---------------------------------------------------------------- reporting

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Selection audit or manifest (default: <work-dir>/selection.audit.tsv).
    selection: Option<PathBuf>,
    /// Write the text table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the tab-separated table.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let pool = ctx.pool()?;
    let sel = load_selection(&or(&a.selection, ctx.art.path("selection.audit.tsv")), &pool)?;
    let r = report::report(&sel, &pool)?;
    match &a.out {
        Some(p) => fs::write(p, r.render()).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?,
        None => print!("{}", r.render()),
    }
    if let Some(p) = &a.tsv {
        fs::write(p, r.to_tsv()).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Selections as NAME=PATH (audit or manifest).
    #[arg(required = true)]
    selections: Vec<String>,
    /// Target domain (default: report.target_domain from the config).
    #[arg(long)]
    target: Option<String>,
    /// Random baselines at the first selection's hours, one per seed.
    #[arg(long, default_value_t = 0)]
    random: u64,
}

fn compare(ctx: &Ctx, a: CompareArgs) -> Result<()> {
    let target = a
        .target
        .clone()
        .or_else(|| ctx.cfg.report.target_domain.clone())
        .ok_or_else(|| Error::Config("no target domain; pass --target".into()))?;
    let pool = ctx.pool()?;
    let mut named = Vec::new();
    for s in &a.selections {
        let (name, path) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected NAME=PATH, got {s:?}")))?;
        named.push((name.to_string(), load_selection(Path::new(path), &pool)?));
    }
    let budget = named[0].1.total_hours;
    if a.random > 0 {
        require_positive("the first selection's hours", budget)?;
    }
    for seed in 0..a.random {
        named.push((format!("random{seed}"), selector::random_select(&pool, budget, seed)?));
    }
    let rows = report::compare(&named, &pool, &target)?;
    print!("{}", report::render_comparison(&rows, &target));
    Ok(())
}

fn run(ctx: &Ctx) -> Result<()> {
    let out = pipeline::run_pipeline(&ctx.cfg)?;
    for s in &out.stages {
        let status = match s.status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
            StageStatus::Refreshed => "refreshed",
        };
        println!("{:<18} {status}", s.name);
    }
    println!();
    print!("{}", out.report.render());
    if let (Some(rows), Some(t)) = (&out.comparison, &ctx.cfg.report.target_domain) {
        println!();
        print!("{}", report::render_comparison(rows, t));
    }
    println!();
    println!("selection: {}", out.artifacts.path("selection.tsv").display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Thresholds to try, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let points = pipeline::sweep_lambda(&ctx.cfg, &a.lambdas)?;
    print!("{}", pipeline::render_sweep(&points));
    Ok(())
}
