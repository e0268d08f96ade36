//! Genetic-programming search over expression trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::expr::{subtree_end, BinaryOp, ComplexityLimits, Node, SymbolicExpression, UnaryOp};
use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpParams {
    pub population_size: usize,
    /// Generations run after the initial population.
    pub iterations: usize,
    pub tournament_size: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub max_complexity: usize,
    pub max_operator_nesting: usize,
    /// Depth of initial trees in levels (root = 1).
    pub init_max_depth: usize,
    pub parsimony: f64,
    pub retry_budget: usize,
    /// Rows used for fitness; larger inputs are subsampled once per run.
    pub fitness_sample: usize,
    pub constant_range: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            population_size: 1000,
            iterations: 20,
            tournament_size: 5,
            crossover_probability: 0.7,
            mutation_probability: 0.3,
            max_complexity: 90,
            max_operator_nesting: 4,
            init_max_depth: 5,
            parsimony: 1e-3,
            retry_budget: 10,
            fitness_sample: 256,
            constant_range: 2.0,
        }
    }
}

impl GpParams {
    pub fn limits(&self) -> ComplexityLimits {
        ComplexityLimits {
            max_complexity: self.max_complexity,
            max_operator_nesting: self.max_operator_nesting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("gp needs at least one iteration".into()));
        }
        if self.population_size < 2 || self.tournament_size == 0 {
            return Err(Error::InvalidArgument(
                "gp population must be >= 2 and tournament >= 1".into(),
            ));
        }
        if self.init_max_depth < 1 || self.init_max_depth > self.max_operator_nesting + 1 {
            return Err(Error::InvalidArgument(
                "initial depth must not exceed operator nesting + 1".into(),
            ));
        }
        if self.fitness_sample < 2 {
            return Err(Error::InvalidArgument("fitness sample must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub expression: SymbolicExpression,
    pub complexity: usize,
    /// Mean squared error on the fitness rows.
    pub loss: f64,
}

/// Best expression found at each complexity.
#[derive(Debug, Clone, Default)]
pub struct ParetoArchive {
    by_complexity: Vec<Option<ArchiveEntry>>,
}

impl ParetoArchive {
    fn offer(&mut self, expr: &SymbolicExpression, loss: f64) {
        if !loss.is_finite() {
            return;
        }
        let c = expr.complexity();
        if self.by_complexity.len() <= c {
            self.by_complexity.resize(c + 1, None);
        }
        let slot = &mut self.by_complexity[c];
        if slot.as_ref().map_or(true, |e| loss < e.loss) {
            *slot = Some(ArchiveEntry {
                expression: expr.clone(),
                complexity: c,
                loss,
            });
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.by_complexity
            .iter()
            .flatten()
            .map(|e| e.loss)
            .fold(f64::INFINITY, f64::min)
    }

    /// Non-dominated entries in increasing complexity: each is strictly
    /// better than every simpler entry.
    pub fn front(&self) -> Vec<ArchiveEntry> {
        let mut out: Vec<ArchiveEntry> = Vec::new();
        for e in self.by_complexity.iter().flatten() {
            if out.last().map_or(true, |last| e.loss < last.loss) {
                out.push(e.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub archive: Vec<ArchiveEntry>,
    /// Best archived loss after initialisation and after every generation.
    pub best_loss_history: Vec<f64>,
    pub no_op_generations: usize,
}

struct Individual {
    expr: SymbolicExpression,
    loss: f64,
    fitness: f64,
}

struct Engine<'a> {
    params: &'a GpParams,
    limits: ComplexityLimits,
    n_vars: usize,
    columns: Vec<Vec<f64>>,
    targets: Vec<f64>,
    rng: ChaCha8Rng,
    buf: Vec<f64>,
}

impl Engine<'_> {
    fn mse(&mut self, expr: &SymbolicExpression) -> f64 {
        let n = self.targets.len();
        expr.evaluate_columns(&self.columns, n, &mut self.buf);
        let mut total = 0.0;
        for (p, t) in self.buf.iter().zip(&self.targets) {
            total += (p - t) * (p - t);
        }
        let mse = total / n as f64;
        if mse.is_finite() {
            mse
        } else {
            f64::INFINITY
        }
    }

    fn individual(&mut self, expr: SymbolicExpression) -> Individual {
        let loss = self.mse(&expr);
        let fitness = loss * (1.0 + self.params.parsimony * expr.complexity() as f64);
        Individual {
            expr,
            loss,
            fitness,
        }
    }

    fn terminal(&mut self) -> Node {
        if self.rng.gen_bool(0.75) {
            Node::Var(self.rng.gen_range(0..self.n_vars) as u16)
        } else {
            let r = self.params.constant_range;
            Node::Const(self.rng.gen_range(-r..=r))
        }
    }

    fn operator(&mut self) -> Node {
        let k = self.rng.gen_range(0..UnaryOp::ALL.len() + BinaryOp::ALL.len());
        if k < UnaryOp::ALL.len() {
            Node::Unary(UnaryOp::ALL[k])
        } else {
            Node::Binary(BinaryOp::ALL[k - UnaryOp::ALL.len()])
        }
    }

    /// Random tree of at most `depth` levels; `full` forces operators until
    /// the last level.
    fn random_tree(&mut self, depth: usize, full: bool, out: &mut Vec<Node>) {
        let leaf = depth <= 1 || (!full && self.rng.gen_bool(0.3));
        if leaf {
            let t = self.terminal();
            out.push(t);
            return;
        }
        let op = self.operator();
        out.push(op);
        for _ in 0..op.arity() {
            self.random_tree(depth - 1, full, out);
        }
    }

    fn tournament(&mut self, pop: &[Individual]) -> usize {
        let mut best = self.rng.gen_range(0..pop.len());
        for _ in 1..self.params.tournament_size {
            let c = self.rng.gen_range(0..pop.len());
            if pop[c].fitness < pop[best].fitness {
                best = c;
            }
        }
        best
    }

    fn crossover(&mut self, a: &SymbolicExpression, b: &SymbolicExpression) -> Vec<Node> {
        let an = a.nodes();
        let bn = b.nodes();
        let i = self.rng.gen_range(0..an.len());
        let j = self.rng.gen_range(0..bn.len());
        let (i_end, j_end) = (subtree_end(an, i), subtree_end(bn, j));
        let mut child = Vec::with_capacity(an.len() - (i_end - i) + (j_end - j));
        child.extend_from_slice(&an[..i]);
        child.extend_from_slice(&bn[j..j_end]);
        child.extend_from_slice(&an[i_end..]);
        child
    }

    fn mutate(&mut self, a: &SymbolicExpression) -> Vec<Node> {
        let mut nodes = a.nodes().to_vec();
        let constants: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Const(_)))
            .map(|(i, _)| i)
            .collect();
        match self.rng.gen_range(0..3) {
            0 if !constants.is_empty() => {
                let i = *constants.choose(&mut self.rng).expect("non-empty");
                if let Node::Const(c) = nodes[i] {
                    let sigma = 0.1 * c.abs() + 0.01;
                    let noise = Normal::new(0.0, sigma).expect("positive sigma");
                    nodes[i] = Node::Const(c + noise.sample(&mut self.rng));
                }
                nodes
            }
            1 => {
                let i = self.rng.gen_range(0..nodes.len());
                nodes[i] = match nodes[i] {
                    Node::Var(_) | Node::Const(_) => self.terminal(),
                    Node::Unary(_) => Node::Unary(*UnaryOp::ALL.choose(&mut self.rng).expect("ops")),
                    Node::Binary(_) => {
                        Node::Binary(*BinaryOp::ALL.choose(&mut self.rng).expect("ops"))
                    }
                };
                nodes
            }
            _ => {
                let i = self.rng.gen_range(0..nodes.len());
                let end = subtree_end(&nodes, i);
                let mut fresh = Vec::new();
                let depth = self.rng.gen_range(1..=3);
                self.random_tree(depth, false, &mut fresh);
                nodes.splice(i..end, fresh);
                nodes
            }
        }
    }

    fn offspring(&mut self, pop: &[Individual]) -> (SymbolicExpression, bool) {
        let pa = self.tournament(pop);
        for _ in 0..self.params.retry_budget.max(1) {
            let p = self.params.crossover_probability
                / (self.params.crossover_probability + self.params.mutation_probability);
            let nodes = if self.rng.gen_bool(p.clamp(0.0, 1.0)) {
                let pb = self.tournament(pop);
                let (a, b) = (pop[pa].expr.clone(), pop[pb].expr.clone());
                self.crossover(&a, &b)
            } else {
                let a = pop[pa].expr.clone();
                self.mutate(&a)
            };
            let child = SymbolicExpression::from_nodes_unchecked(nodes, self.n_vars).fold_constants();
            if self.limits.admits(&child) {
                return (child, true);
            }
        }
        (pop[pa].expr.clone(), false)
    }
}

/// Evolves expressions for `y ≈ f(x)`, optionally seeding the population with
/// `warm_start` expressions, and returns the Pareto archive.
pub fn evolve(
    x: &[Vec<f64>],
    y: &[f64],
    params: &GpParams,
    seed: u64,
    warm_start: &[SymbolicExpression],
) -> Result<EvolutionResult> {
    params.validate()?;
    check_dim(x.len(), y.len())?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument("gp needs at least 2 rows".into()));
    }
    check_finite(y, "gp targets")?;
    let d = x[0].len();
    if d == 0 || d > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("unsupported input width {d}")));
    }
    for row in x {
        check_dim(d, row.len())?;
        check_finite(row, "gp inputs")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..y.len()).collect();
    if rows.len() > params.fitness_sample {
        rows.shuffle(&mut rng);
        rows.truncate(params.fitness_sample);
        rows.sort_unstable();
    }
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|f| rows.iter().map(|&r| x[r][f]).collect())
        .collect();
    let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();

    let mut engine = Engine {
        params,
        limits: params.limits(),
        n_vars: d,
        columns,
        targets,
        rng,
        buf: Vec::new(),
    };

    let mut population: Vec<Individual> = Vec::with_capacity(params.population_size);
    for w in warm_start.iter().take(params.population_size / 2) {
        if w.n_vars() == d && engine.limits.admits(w) {
            let ind = engine.individual(w.clone());
            population.push(ind);
        }
    }
    let mut k = 0usize;
    let depths = params.init_max_depth.saturating_sub(1).max(1);
    while population.len() < params.population_size {
        let depth = 2.min(params.init_max_depth) + k % depths;
        let depth = depth.min(params.init_max_depth);
        let full = k % 2 == 0;
        let mut nodes = Vec::new();
        engine.random_tree(depth, full, &mut nodes);
        let expr = SymbolicExpression::from_nodes_unchecked(nodes, d).fold_constants();
        let ind = engine.individual(expr);
        population.push(ind);
        k += 1;
    }

    let mut archive = ParetoArchive::default();
    for ind in &population {
        archive.offer(&ind.expr, ind.loss);
    }
    let mut history = vec![archive.best_loss()];
    let mut no_op_generations = 0;

    for generation in 0..params.iterations {
        // Elites: the lowest-loss individual at each complexity.
        let mut elite_idx: Vec<Option<usize>> = vec![None; params.max_complexity + 1];
        for (i, ind) in population.iter().enumerate() {
            let c = ind.expr.complexity();
            if !ind.loss.is_finite() || c > params.max_complexity {
                continue;
            }
            if elite_idx[c].map_or(true, |j| ind.loss < population[j].loss) {
                elite_idx[c] = Some(i);
            }
        }
        let elites: Vec<usize> = elite_idx.into_iter().flatten().collect();

        let mut next: Vec<Individual> = Vec::with_capacity(params.population_size);
        let mut any_valid = false;
        let mut children = Vec::with_capacity(params.population_size);
        while children.len() + elites.len() < params.population_size {
            let (child, valid) = engine.offspring(&population);
            any_valid |= valid;
            children.push(child);
        }
        if !any_valid && !children.is_empty() {
            log::info!("gp generation {generation}: every offspring invalid; population kept");
            no_op_generations += 1;
            history.push(archive.best_loss());
            continue;
        }
        for i in elites {
            let ind = &population[i];
            next.push(Individual {
                expr: ind.expr.clone(),
                loss: ind.loss,
                fitness: ind.fitness,
            });
        }
        for child in children {
            let ind = engine.individual(child);
            archive.offer(&ind.expr, ind.loss);
            next.push(ind);
        }
        population = next;
        history.push(archive.best_loss());
    }

    Ok(EvolutionResult {
        archive: archive.front(),
        best_loss_history: history,
        no_op_generations,
    })
}

/// Archive member with the lowest mean squared error on the validation rows;
/// ties go to the simpler expression.
pub fn select_policy_expression<'a>(
    archive: &'a [ArchiveEntry],
    x_val: &[Vec<f64>],
    y_val: &[f64],
) -> Result<&'a ArchiveEntry> {
    if archive.is_empty() {
        return Err(Error::Empty("symbolic archive"));
    }
    check_dim(x_val.len(), y_val.len())?;
    if y_val.is_empty() {
        return Err(Error::Empty("validation rows"));
    }
    let mut best: Option<(f64, &ArchiveEntry)> = None;
    for entry in archive {
        let mut total = 0.0;
        for (row, t) in x_val.iter().zip(y_val) {
            total += (entry.expression.evaluate(row)? - t).powi(2);
        }
        let mse = total / y_val.len() as f64;
        let mse = if mse.is_finite() { mse } else { f64::INFINITY };
        let better = match best {
            None => true,
            Some((b, e)) => mse < b || (mse == b && entry.complexity < e.complexity),
        };
        if better {
            best = Some((mse, entry));
        }
    }
    Ok(best.expect("non-empty archive").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    fn small() -> GpParams {
        GpParams {
            population_size: 200,
            iterations: 10,
            ..GpParams::default()
        }
    }

    #[test]
    fn recovers_identity() {
        let x = grid(100, 2, 1);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let result = evolve(&x, &y, &small(), 4, &[]).unwrap();
        let hit = result.archive.iter().find(|e| e.loss < 1e-6).unwrap();
        assert!(hit.complexity <= 3);
    }

    #[test]
    fn archive_is_non_dominated_and_history_monotone() {
        let x = grid(150, 3, 2);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[2].sin()).collect();
        let result = evolve(&x, &y, &small(), 9, &[]).unwrap();
        for w in result.archive.windows(2) {
            assert!(w[0].complexity < w[1].complexity);
            assert!(w[0].loss > w[1].loss);
        }
        for w in result.best_loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(result.best_loss_history.len(), small().iterations + 1);
        let limits = small().limits();
        assert!(result.archive.iter().all(|e| limits.admits(&e.expression)));
    }

    #[test]
    fn evolution_is_reproducible() {
        let x = grid(80, 2, 3);
        let y: Vec<f64> = x.iter().map(|r| r[0].tanh() - r[1]).collect();
        let a = evolve(&x, &y, &small(), 17, &[]).unwrap();
        let b = evolve(&x, &y, &small(), 17, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warm_start_keeps_good_solution() {
        let x = grid(80, 2, 5);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let seeded = SymbolicExpression::parse_prefix("mul x0 x1", 2).unwrap();
        let params = GpParams { iterations: 1, population_size: 20, ..GpParams::default() };
        let result = evolve(&x, &y, &params, 1, &[seeded]).unwrap();
        assert_eq!(result.best_loss_history[0], 0.0);
    }

    #[test]
    fn selection_prefers_lower_validation_loss_then_simpler() {
        let e = |t: &str| SymbolicExpression::parse_prefix(t, 1).unwrap();
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        let archive = vec![
            ArchiveEntry { expression: e("x0"), complexity: 1, loss: 0.5 },
            ArchiveEntry { expression: e("add x0 0.0"), complexity: 3, loss: 0.1 },
            ArchiveEntry { expression: e("square x0"), complexity: 2, loss: 0.0 },
        ];
        let chosen = select_policy_expression(&archive, &x, &y).unwrap();
        assert_eq!(chosen.complexity, 1);
        let single = &archive[2..];
        assert_eq!(select_policy_expression(single, &x, &y).unwrap().complexity, 2);
        assert!(select_policy_expression(&[], &x, &y).is_err());
    }

    #[test]
    fn rejects_invalid_inputs() {
        let x = grid(10, 2, 1);
        let y = vec![0.0; 10];
        assert!(evolve(&x, &y, &GpParams { iterations: 0, ..small() }, 1, &[]).is_err());
        assert!(evolve(&x[..1], &y[..1], &small(), 1, &[]).is_err());
    }
}
