//! Subcommand implementations.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Deserialize;

use factadapt_core::adapters::{LexicalConsistency, PrecomputedGenerator, RegexNer};
use factadapt_core::augmentation::{
    build_augmentation_set, contrastive_from_counterfactuals, filter_dataset, map_contrastive_set,
    AugmentationConfig, ContrastiveRecord,
};
use factadapt_core::construction::{
    build_eval_set, search_threshold, BuildOptions, ThresholdSearch, Toolkit,
};
use factadapt_core::io::{
    self, write_atomic, write_jsonl, CachedScorer, RunManifest, ScoreCache, CACHE_ENV,
};
use factadapt_core::metrics::{
    aggregate, evaluate_generation, evaluate_mcl, evaluate_replacement, report_csv, RateOptions,
};
use factadapt_core::model::{
    CounterfactualSample, Dataset, EvalSetId, GroupSpec, MetricsReport, ValidationConfig,
};
use factadapt_core::pool::{build_pool, PoolOptions};
use factadapt_core::replacement::ReplacementOptions;
use factadapt_core::{Error as CoreError, LikelihoodScorer, Tokenizer};

use crate::config::{config_error, Config, ConfigError, NerSpec, ScorerSpec};
use crate::{Command, Overrides};

/// Whether `e` should end the process with the configuration exit status.
pub fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.is::<ConfigError>() || matches!(cause.downcast_ref::<CoreError>(), Some(CoreError::InvalidConfig(_)))
    })
}

// =============================================================================
// Effective settings
// =============================================================================

/// The config file with command-line overrides applied.
struct Settings {
    config: Config,
    cache: Option<PathBuf>,
    workers: usize,
}

impl Settings {
    fn resolve(o: &Overrides) -> Result<Settings> {
        let mut config = match &o.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let c = &mut config.construction;
        if let Some(s) = o.scenario {
            c.scenario = s.into();
        }
        if let Some(g) = o.group {
            c.group = g.into();
        }
        if let Some(t) = o.threshold {
            c.threshold = t;
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(r) = o.ratio {
            config.augmentation.ratio = r;
        }
        if let Some(p) = &o.scorer {
            config.scorer = Some(ScorerSpec::from_file(p)?);
        }
        if let Some(p) = &o.ner {
            config.ner = Some(NerSpec::from_file(p));
        }
        let cache = if o.no_cache {
            None
        } else {
            o.cache
                .clone()
                .or_else(|| config.cache.clone())
                .or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        };
        let workers = o.workers.or(config.workers).unwrap_or(1);
        if workers == 0 {
            return Err(config_error("workers must be at least 1"));
        }
        Ok(Settings {
            config,
            cache,
            workers,
        })
    }

    fn tokenizer(&self) -> Box<dyn Tokenizer> {
        self.config.tokenizer.build()
    }

    fn ner(&self) -> Result<RegexNer> {
        self.config
            .ner
            .as_ref()
            .ok_or_else(|| config_error("an NER config is required (--ner or [ner])"))?
            .build()
    }

    /// The configured scorer, wrapped in the likelihood cache when one is set.
    fn scorer(&self) -> Result<(Arc<dyn LikelihoodScorer>, Option<Arc<ScoreCache>>)> {
        let raw = self
            .config
            .scorer
            .as_ref()
            .ok_or_else(|| config_error("a scorer is required (--scorer or [scorer])"))?
            .build()?;
        match &self.cache {
            Some(path) => {
                let cache = Arc::new(
                    ScoreCache::open(path)
                        .with_context(|| format!("opening cache {}", path.display()))?,
                );
                log::info!("likelihood cache {} ({} entries)", path.display(), cache.len());
                Ok((Arc::new(CachedScorer::new(raw, cache.clone())), Some(cache)))
            }
            None => Ok((raw, None)),
        }
    }

    fn replacement(&self) -> ReplacementOptions {
        ReplacementOptions {
            min_word_len: self.config.construction.min_word_len,
        }
    }

    fn build_options(&self) -> Result<BuildOptions> {
        let c = &self.config.construction;
        let validation = ValidationConfig {
            null_document: c.null_document.clone(),
            mask_token: c.mask_token.clone(),
            ..ValidationConfig::new(c.scenario, c.threshold)?
        };
        let options = BuildOptions {
            fan_out: c.fan_out,
            max_per_sample: c.max_per_sample,
            excluded_categories: c.excluded_categories.clone(),
            replacement: self.replacement(),
            workers: self.workers,
            ..BuildOptions::new(
                validation,
                GroupSpec {
                    group: c.group,
                    boundaries: c.boundaries,
                },
                c.seed,
            )
        };
        options.validate()?;
        Ok(options)
    }

    fn excluded(&self) -> HashSet<String> {
        self.config.construction.excluded_categories.iter().cloned().collect()
    }

    fn manifest(&self, command: &str) -> Result<RunManifest> {
        let config = serde_json::json!({
            "settings": serde_json::to_value(&self.config)?,
            "cache": self.cache,
            "workers": self.workers,
        });
        let mut m = RunManifest::new(command, config);
        m.seeds.push(self.config.construction.seed);
        Ok(m)
    }
}

fn finish(mut manifest: RunManifest, outputs: &[&Path]) -> Result<()> {
    for p in outputs {
        manifest.add_output(p)?;
    }
    for p in manifest.write()? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    io::ingest_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_counterfactuals(path: &Path) -> Result<Vec<CounterfactualSample>> {
    io::read_jsonl(path).with_context(|| format!("reading counterfactuals {}", path.display()))
}

/// One generated summary per line, keyed by the document it was generated
/// from.
#[derive(Debug, Deserialize)]
struct Generation {
    document: String,
    summary: String,
}

fn load_generator(path: &Path, id: &str) -> Result<PrecomputedGenerator> {
    let mut g = PrecomputedGenerator::new(id);
    for r in io::read_jsonl::<Generation>(path)
        .with_context(|| format!("reading generations {}", path.display()))?
    {
        g.insert(r.document, r.summary);
    }
    Ok(g)
}

fn eval_set_of(dataset: &str, scorer: &str, cfs: &[CounterfactualSample]) -> Option<EvalSetId> {
    cfs.first().map(|c| EvalSetId {
        scorer: scorer.to_string(),
        dataset: dataset.to_string(),
        group: c.group,
        scenario: c.scenario,
    })
}

fn write_report(report: &MetricsReport, output: &Path, csv: Option<&Path>) -> Result<Vec<PathBuf>> {
    write_atomic(output, (serde_json::to_string_pretty(report)? + "\n").as_bytes())?;
    let mut written = vec![output.to_path_buf()];
    if let Some(csv) = csv {
        write_atomic(csv, report_csv(report).as_bytes())?;
        written.push(csv.to_path_buf());
    }
    Ok(written)
}

fn print_aggregate(report: &MetricsReport) {
    let a = &report.aggregate;
    for (name, s) in [("m_cl", a.m_cl), ("m_fc", a.m_fc), ("replacement_rate", a.replacement_rate)] {
        if let Some(s) = s {
            println!("{name}: mean={:.4} std={:.4} n={}", s.mean, s.std, s.n);
        }
    }
    if report.skipped > 0 {
        println!("skipped: {}", report.skipped);
    }
}

/// `<output>.skipped.jsonl`
fn default_skip_log(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".skipped.jsonl");
    output.with_file_name(name)
}

// =============================================================================
// Dispatch
// =============================================================================

pub fn run(command: Command, overrides: &Overrides) -> Result<()> {
    let settings = Settings::resolve(overrides)?;
    match command {
        Command::BuildPool {
            corpus,
            output,
            fields,
            min_frequency,
        } => {
            let mut options = PoolOptions {
                fields: settings.config.pool.fields,
                min_frequency: settings.config.pool.min_frequency,
            };
            if let Some(f) = fields {
                options.fields = f.into();
            }
            if let Some(m) = min_frequency {
                options.min_frequency = m;
            }
            let corpus_ds = load_dataset(&corpus)?;
            let ner = settings.ner()?;
            let pool = build_pool(&corpus_ds.samples, &ner, &settings.excluded(), &options)?;
            io::write_pool(&output, &pool)?;
            println!("pool: {} candidates", pool.len());
            let mut m = settings.manifest("build-pool")?;
            m.seeds.clear();
            m.add_input(&corpus)?;
            finish(m, &[&output])
        }

        Command::BuildEvalSet {
            data,
            pool,
            output,
            skip_log,
            max_per_sample,
            dataset_name,
        } => {
            let mut settings = settings;
            if max_per_sample.is_some() {
                settings.config.construction.max_per_sample = max_per_sample;
            }
            let options = settings.build_options()?;
            let dataset = load_dataset(&data)?;
            let candidates = io::read_pool(&pool)?;
            let ner = settings.ner()?;
            let tokenizer = settings.tokenizer();
            let (scorer, cache) = settings.scorer()?;
            let tools = Toolkit {
                scorer: scorer.as_ref(),
                tokenizer: tokenizer.as_ref(),
                ner: &ner,
            };
            let built = build_eval_set(&dataset, &candidates, &tools, &options)?;
            if let Some(c) = &cache {
                c.flush()?;
            }
            let skip_log = skip_log.unwrap_or_else(|| default_skip_log(&output));
            write_jsonl(&output, &built.samples)?;
            write_jsonl(&skip_log, &built.skipped)?;
            println!(
                "emitted {} counterfactuals from {} samples ({} skip records)",
                built.samples.len(),
                dataset.len(),
                built.skipped.len()
            );
            let c = &settings.config.construction;
            let mut m = settings.manifest("build-eval-set")?.with_eval_set(EvalSetId {
                scorer: scorer.id().to_string(),
                dataset: dataset_name.unwrap_or_else(|| dataset.name.clone()),
                group: c.group,
                scenario: c.scenario,
            });
            m.scorer_ids.push(scorer.id().to_string());
            m.add_input(&data)?;
            m.add_input(&pool)?;
            finish(m, &[&output, &skip_log])
        }

        Command::SearchThreshold {
            data,
            pool,
            target,
            tolerance,
            step,
            output,
        } => {
            let s = &settings.config.search;
            let search = ThresholdSearch {
                target_fraction: target.unwrap_or(s.target),
                tolerance: tolerance.unwrap_or(s.tolerance),
                step: step.unwrap_or(s.step),
            };
            search.validate()?;
            let options = settings.build_options()?;
            let dataset = load_dataset(&data)?;
            let candidates = io::read_pool(&pool)?;
            let ner = settings.ner()?;
            let tokenizer = settings.tokenizer();
            let (scorer, _cache) = settings.scorer()?;
            let tools = Toolkit {
                scorer: scorer.as_ref(),
                tokenizer: tokenizer.as_ref(),
                ner: &ner,
            };
            let result = search_threshold(&dataset, &candidates, &tools, &options, &search)?;
            println!(
                "τ={:.2} fraction={:.4} probes={}",
                result.threshold,
                result.fraction,
                result.probes.len()
            );
            if let Some(out) = output {
                write_atomic(&out, (serde_json::to_string_pretty(&result)? + "\n").as_bytes())?;
                let mut m = settings.manifest("search-threshold")?;
                m.scorer_ids.push(scorer.id().to_string());
                m.add_input(&data)?;
                m.add_input(&pool)?;
                finish(m, &[&out])?;
            }
            Ok(())
        }

        Command::ScoreMcl {
            originals,
            counterfactuals,
            output,
            csv,
        } => {
            let dataset = load_dataset(&originals)?;
            let cfs = load_counterfactuals(&counterfactuals)?;
            let tokenizer = settings.tokenizer();
            let (scorer, _cache) = settings.scorer()?;
            let mut report =
                evaluate_mcl(scorer.as_ref(), tokenizer.as_ref(), &dataset, &cfs, settings.workers)?;
            report.metadata.seeds = vec![settings.config.construction.seed];
            print_aggregate(&report);
            let written = write_report(&report, &output, csv.as_deref())?;
            let mut m = settings.manifest("score-mcl")?;
            if let Some(id) = eval_set_of(&dataset.name, scorer.id(), &cfs) {
                m = m.with_eval_set(id);
            }
            m.scorer_ids.push(scorer.id().to_string());
            m.add_input(&originals)?;
            m.add_input(&counterfactuals)?;
            finish(m, &written.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::ScoreMfc {
            originals,
            counterfactuals,
            generations,
            generator_id,
            output,
            csv,
        } => {
            let dataset = load_dataset(&originals)?;
            let cfs = load_counterfactuals(&counterfactuals)?;
            let generator = load_generator(&generations, &generator_id)?;
            let rate = RateOptions {
                min_word_len: settings.config.construction.min_word_len,
                ..RateOptions::default()
            };
            let mut report = evaluate_generation(
                &generator,
                &LexicalConsistency,
                &dataset,
                &cfs,
                &rate,
                settings.workers,
            )?;
            report.metadata.seeds = vec![settings.config.construction.seed];
            print_aggregate(&report);
            let written = write_report(&report, &output, csv.as_deref())?;
            let mut m = settings.manifest("score-mfc")?;
            if let Some(id) = eval_set_of(&dataset.name, &generator_id, &cfs) {
                m = m.with_eval_set(id);
            }
            m.scorer_ids.push(generator_id);
            m.add_input(&originals)?;
            m.add_input(&counterfactuals)?;
            m.add_input(&generations)?;
            finish(m, &written.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::ReplacementRate {
            counterfactuals,
            generations,
            generator_id,
            output,
            full_surface_only,
        } => {
            let cfs = load_counterfactuals(&counterfactuals)?;
            let generator = load_generator(&generations, &generator_id)?;
            let rate = RateOptions {
                partial_leakage: !full_surface_only,
                min_word_len: settings.config.construction.min_word_len,
            };
            let name = counterfactuals
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut report = evaluate_replacement(&generator, &name, &cfs, &rate)?;
            report.metadata.seeds = vec![settings.config.construction.seed];
            print_aggregate(&report);
            let written = write_report(&report, &output, None)?;
            let mut m = settings.manifest("replacement-rate")?;
            m.scorer_ids.push(generator_id);
            m.add_input(&counterfactuals)?;
            m.add_input(&generations)?;
            finish(m, &written.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::Aggregate {
            reports,
            output,
            csv,
        } => {
            let mut loaded = Vec::with_capacity(reports.len());
            for p in &reports {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading report {}", p.display()))?;
                let r: MetricsReport = serde_json::from_str(&text)
                    .with_context(|| format!("parsing report {}", p.display()))?;
                loaded.push(r);
            }
            let report = aggregate(&loaded)?;
            if report.metadata.single_seed {
                log::warn!("only one report given; the standard deviation is 0");
            }
            print_aggregate(&report);
            let written = write_report(&report, &output, csv.as_deref())?;
            let mut m = settings.manifest("aggregate")?;
            m.seeds = report.metadata.seeds.clone();
            m.scorer_ids.push(report.metadata.scorer.clone());
            for p in &reports {
                m.add_input(p)?;
            }
            finish(m, &written.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::BuildAugmentation {
            train,
            pool,
            output,
            contrastive,
            negatives,
        } => {
            let c = &settings.config.construction;
            let a = &settings.config.augmentation;
            let config = AugmentationConfig {
                ratio: a.ratio,
                group: c.group,
                scenario: c.scenario,
                threshold: c.threshold,
                negatives_per_sample: negatives.unwrap_or(a.negatives_per_sample),
                seed: c.seed,
                construction_seed: a.construction_seed,
            };
            config.validate()?;
            let dataset = load_dataset(&train)?;
            let candidates = io::read_pool(&pool)?;
            let ner = settings.ner()?;
            let tokenizer = settings.tokenizer();
            let (scorer, cache) = settings.scorer()?;
            let tools = Toolkit {
                scorer: scorer.as_ref(),
                tokenizer: tokenizer.as_ref(),
                ner: &ner,
            };
            let built = build_augmentation_set(&dataset, &candidates, &tools, &config, settings.workers)?;
            write_jsonl(&output, &built.samples)?;
            println!(
                "augmentation: {} of {} available (target {})",
                built.samples.len(),
                built.available,
                built.target
            );
            let mut outputs = vec![output.clone()];
            if let Some(path) = contrastive {
                let (records, errors) =
                    contrastive_from_counterfactuals(&dataset, &built.samples, &candidates, &tools, &config);
                for e in &errors {
                    log::warn!("contrastive record {}: {}: {}", e.record_id, e.field, e.message);
                }
                write_jsonl(&path, &records)?;
                println!("contrastive: {} records ({} failures)", records.len(), errors.len());
                outputs.push(path);
            }
            if let Some(c) = &cache {
                c.flush()?;
            }
            let mut m = settings.manifest("build-augmentation")?;
            m.seeds = vec![config.seed, config.construction_seed];
            m.scorer_ids.push(scorer.id().to_string());
            m.add_input(&train)?;
            m.add_input(&pool)?;
            finish(m, &outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::MapContrastive {
            records,
            counterfactuals,
            output,
            errors,
        } => {
            let recs: Vec<ContrastiveRecord> = io::read_jsonl(&records)
                .with_context(|| format!("reading contrastive records {}", records.display()))?;
            let cfs = load_counterfactuals(&counterfactuals)?;
            let (mapped, failures) = map_contrastive_set(&recs, &cfs, &settings.replacement());
            write_jsonl(&output, &mapped)?;
            let mut outputs = vec![output.clone()];
            if let Some(p) = errors {
                write_jsonl(&p, &failures)?;
                outputs.push(p);
            } else {
                for e in &failures {
                    log::warn!("record {}: {}: {}", e.record_id, e.field, e.message);
                }
            }
            println!("mapped {} records ({} text failures)", mapped.len(), failures.len());
            let mut m = settings.manifest("map-contrastive")?;
            m.add_input(&records)?;
            m.add_input(&counterfactuals)?;
            finish(m, &outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }

        Command::Filter {
            data,
            output,
            dropped,
        } => {
            let dataset = load_dataset(&data)?;
            let ner = settings.ner()?;
            let outcome = filter_dataset(&dataset, &ner, &settings.config.construction.excluded_categories);
            write_jsonl(&output, &outcome.kept)?;
            let dropped = dropped.unwrap_or_else(|| {
                let mut name = output.file_name().unwrap_or_default().to_os_string();
                name.push(".dropped.jsonl");
                output.with_file_name(name)
            });
            write_jsonl(&dropped, &outcome.dropped)?;
            println!("kept {} of {} samples", outcome.kept.len(), dataset.len());
            let mut m = settings.manifest("filter")?;
            m.seeds.clear();
            m.add_input(&data)?;
            finish(m, &[&output, &dropped])
        }
    }
}
