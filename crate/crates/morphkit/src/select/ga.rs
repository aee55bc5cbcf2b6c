//! Genetic search over feature bitstrings: tournament selection,
//! single-point crossover, per-bit mutation, and elitism (the best string
//! survives each generation unchanged, so best fitness never regresses).

use crate::error::Result;
use crate::select::fitness::{fitness, Chromosome, FitnessConfig, SelectionDataset};
use crate::select::forest::RfConfig;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 30,
            population: 60,
            crossover_prob: 0.7,
            mutation_prob: 0.03,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generations < 1 || self.population < 1 {
            return Err(crate::error::Error::invalid(
                "GA needs at least 1 generation and 1 individual",
            ));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(crate::error::Error::invalid(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Best/mean fitness of one evaluated generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// One non-dominated (feature count, classifier quality) point among the
/// masks the search evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub n_features: usize,
    pub quality: f64,
    pub bits: String,
}

#[derive(Debug, Clone)]
pub struct FitnessReport {
    /// One row per evaluated population: the initial one plus each
    /// generation, `generations + 1` rows in total.
    pub trace: Vec<GenStats>,
    pub best: Chromosome,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// Quality-vs-count front over every evaluated mask. The search
    /// itself optimizes the scalarized objective; this is for inspection.
    pub pareto: Vec<ParetoPoint>,
}

impl FitnessReport {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("generation,best_fitness,mean_fitness\n");
        for g in &self.trace {
            out.push_str(&format!("{},{},{}\n", g.generation, g.best, g.mean));
        }
        out
    }

    pub fn pareto_csv(&self) -> String {
        let mut out = String::from("n_features,quality,bits\n");
        for p in &self.pareto {
            out.push_str(&format!("{},{},{}\n", p.n_features, p.quality, p.bits));
        }
        out
    }
}

/// Non-dominated set over (count asc, quality desc) from the evaluation
/// cache; `alpha` recovers the raw quality from the scalarized fitness.
fn pareto_front(cache: &HashMap<Vec<bool>, f64>, alpha: f64) -> Vec<ParetoPoint> {
    let mut by_count: std::collections::BTreeMap<usize, (f64, &Vec<bool>)> =
        std::collections::BTreeMap::new();
    for (bits, &fit) in cache {
        let count = bits.iter().filter(|&&b| b).count();
        let quality = fit + alpha * count as f64 / bits.len().max(1) as f64;
        match by_count.get(&count) {
            Some((best, _)) if *best >= quality => {}
            _ => {
                by_count.insert(count, (quality, bits));
            }
        }
    }
    let mut front = Vec::new();
    let mut best_quality = f64::NEG_INFINITY;
    for (count, (quality, bits)) in by_count {
        if quality > best_quality {
            best_quality = quality;
            front.push(ParetoPoint {
                n_features: count,
                quality,
                bits: bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            });
        }
    }
    front
}

struct Evaluator<'a> {
    data: &'a SelectionDataset,
    rf_cfg: &'a RfConfig,
    fit_cfg: &'a FitnessConfig,
    seed: u64,
    cache: HashMap<Vec<bool>, f64>,
    evaluations: usize,
    jobs: usize,
}

impl<'a> Evaluator<'a> {
    /// Fill the cache for every chromosome of the population. Uncached
    /// fitness evaluations are independent and run on up to `jobs` threads;
    /// values are pure functions of (bits, seed), so the parallel schedule
    /// cannot change results.
    fn eval_population(&mut self, pop: &[Chromosome]) -> Result<Vec<f64>> {
        let mut pending: Vec<Chromosome> = Vec::new();
        for c in pop {
            if !self.cache.contains_key(&c.bits) && !pending.iter().any(|p| p.bits == c.bits) {
                pending.push(c.clone());
            }
        }
        self.evaluations += pending.len();
        if self.jobs <= 1 || pending.len() <= 1 {
            for c in &pending {
                let f = fitness(c, self.data, self.rf_cfg, self.fit_cfg, self.seed)?;
                self.cache.insert(c.bits.clone(), f);
            }
        } else {
            let chunk = pending.len().div_ceil(self.jobs);
            let results: Vec<Result<Vec<(Vec<bool>, f64)>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = pending
                    .chunks(chunk)
                    .map(|chunk| {
                        let (data, rf_cfg, fit_cfg, seed) =
                            (self.data, self.rf_cfg, self.fit_cfg, self.seed);
                        scope.spawn(move || {
                            chunk
                                .iter()
                                .map(|c| {
                                    fitness(c, data, rf_cfg, fit_cfg, seed)
                                        .map(|f| (c.bits.clone(), f))
                                })
                                .collect()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker")).collect()
            });
            for r in results {
                for (bits, f) in r? {
                    self.cache.insert(bits, f);
                }
            }
        }
        Ok(pop.iter().map(|c| self.cache[&c.bits]).collect())
    }
}

fn tournament<'a, R: Rng>(
    pop: &'a [Chromosome],
    fits: &[f64],
    rng: &mut R,
) -> &'a Chromosome {
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    if fits[a] >= fits[b] {
        &pop[a]
    } else {
        &pop[b]
    }
}

fn crossover<R: Rng>(a: &Chromosome, b: &Chromosome, prob: f64, rng: &mut R) -> (Chromosome, Chromosome) {
    let n = a.len();
    if n >= 2 && rng.gen::<f64>() < prob {
        let point = rng.gen_range(1..n);
        let mut c1 = a.bits.clone();
        let mut c2 = b.bits.clone();
        c1[point..].copy_from_slice(&b.bits[point..]);
        c2[point..].copy_from_slice(&a.bits[point..]);
        (Chromosome::new(c1), Chromosome::new(c2))
    } else {
        (a.clone(), b.clone())
    }
}

fn mutate<R: Rng>(c: &mut Chromosome, prob: f64, rng: &mut R) {
    for bit in &mut c.bits {
        if rng.gen::<f64>() < prob {
            *bit = !*bit;
        }
    }
}

/// Run the search and return the best-ever chromosome with the
/// per-generation fitness trace.
pub fn ga_run(
    data: &SelectionDataset,
    pool_size: usize,
    ga_cfg: &GaConfig,
    rf_cfg: &RfConfig,
    fit_cfg: &FitnessConfig,
    jobs: usize,
) -> Result<(Chromosome, FitnessReport)> {
    ga_cfg.validate()?;
    if pool_size != data.n_features() {
        return Err(crate::error::Error::Shape {
            op: "ga_run",
            lhs: vec![pool_size],
            rhs: vec![data.n_features()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ga_cfg.seed);
    let mut eval = Evaluator {
        data,
        rf_cfg,
        fit_cfg,
        seed: ga_cfg.seed,
        cache: HashMap::new(),
        evaluations: 0,
        jobs: jobs.max(1),
    };

    // Initial population: uniform random bits.
    let mut pop: Vec<Chromosome> = (0..ga_cfg.population)
        .map(|_| Chromosome::new((0..pool_size).map(|_| rng.gen::<bool>()).collect()))
        .collect();
    let mut fits = eval.eval_population(&pop)?;

    let mut trace = Vec::with_capacity(ga_cfg.generations + 1);
    let best_of = |fits: &[f64]| -> (usize, f64) {
        let mut bi = 0;
        for i in 1..fits.len() {
            if fits[i] > fits[bi] {
                bi = i;
            }
        }
        (bi, fits[bi])
    };
    let record = |trace: &mut Vec<GenStats>, g: usize, fits: &[f64]| {
        let best = fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = fits.iter().sum::<f64>() / fits.len() as f64;
        trace.push(GenStats {
            generation: g,
            best,
            mean,
        });
    };
    record(&mut trace, 0, &fits);

    for g in 1..=ga_cfg.generations {
        let (elite_idx, _) = best_of(&fits);
        let elite = pop[elite_idx].clone();
        let mut next = Vec::with_capacity(ga_cfg.population);
        next.push(elite);
        while next.len() < ga_cfg.population {
            let p1 = tournament(&pop, &fits, &mut rng).clone();
            let p2 = tournament(&pop, &fits, &mut rng).clone();
            let (mut c1, mut c2) = crossover(&p1, &p2, ga_cfg.crossover_prob, &mut rng);
            mutate(&mut c1, ga_cfg.mutation_prob, &mut rng);
            mutate(&mut c2, ga_cfg.mutation_prob, &mut rng);
            next.push(c1);
            if next.len() < ga_cfg.population {
                next.push(c2);
            }
        }
        pop = next;
        fits = eval.eval_population(&pop)?;
        record(&mut trace, g, &fits);
    }

    let (bi, bf) = best_of(&fits);
    let report = FitnessReport {
        trace,
        best: pop[bi].clone(),
        best_fitness: bf,
        evaluations: eval.evaluations,
        pareto: pareto_front(&eval.cache, fit_cfg.alpha),
    };
    Ok((pop[bi].clone(), report))
}

/// Exhaustive optimum over all `2^n` masks; the oracle the GA is checked
/// against on small pools.
pub fn exhaustive_best(
    data: &SelectionDataset,
    rf_cfg: &RfConfig,
    fit_cfg: &FitnessConfig,
    seed: u64,
) -> Result<(Chromosome, f64)> {
    let n = data.n_features();
    assert!(n <= 20, "exhaustive search over {n} features is unreasonable");
    let mut best: Option<(Chromosome, f64)> = None;
    for mask in 0u64..(1 << n) {
        let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let c = Chromosome::new(bits);
        let f = fitness(&c, data, rf_cfg, fit_cfg, seed)?;
        let better = match &best {
            None => true,
            Some((_, bf)) => f > *bf,
        };
        if better {
            best = Some((c, f));
        }
    }
    Ok(best.expect("at least one mask"))
}
