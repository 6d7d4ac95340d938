//! Minimum vertex cover solved by a plain generational GA.

use std::collections::BTreeMap;

use crate::rng::SplitMix64;

use super::{AnytimeOptimizer, SubjectError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    vertices: usize,
    edges: Vec<(u32, u32)>,
}

impl Graph {
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn new(vertices: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self, SubjectError> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(SubjectError::InvalidGraph(format!("self-loop on vertex {u}")));
            }
            if u as usize >= vertices || v as usize >= vertices {
                return Err(SubjectError::InvalidGraph(format!("edge ({u}, {v}) out of range")));
            }
            let e = (u.min(v), u.max(v));
            if out.contains(&e) {
                return Err(SubjectError::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
            out.push(e);
        }
        Ok(Self { vertices, edges: out })
    }

    /// Erdős–Rényi `G(n, p)`.
    pub fn random(vertices: usize, density: f64, rng: &mut SplitMix64) -> Self {
        let mut edges = Vec::new();
        for u in 0..vertices as u32 {
            for v in (u + 1)..vertices as u32 {
                if rng.chance(density) {
                    edges.push((u, v));
                }
            }
        }
        Self { vertices, edges }
    }

    pub fn complete(vertices: usize) -> Self {
        let edges = (0..vertices as u32).flat_map(|u| ((u + 1)..vertices as u32).map(move |v| (u, v))).collect();
        Self { vertices, edges }
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn uncovered(&self, cover: &[bool]) -> usize {
        self.edges.iter().filter(|&&(u, v)| !cover[u as usize] && !cover[v as usize]).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvcProblem {
    pub graph: Graph,
    pub population: usize,
    pub mutation_rate: f64,
    pub elite: usize,
}

impl MvcProblem {
    /// `uncovered · |V| + |C|`: every feasible cover beats every infeasible one.
    pub fn fitness(&self, cover: &[bool]) -> u64 {
        let size = cover.iter().filter(|&&b| b).count() as u64;
        self.graph.uncovered(cover) as u64 * self.graph.vertices() as u64 + size
    }

    /// Exhaustive minimum cover size; `None` above 24 vertices.
    pub fn brute_force_optimum(&self) -> Option<u64> {
        let n = self.graph.vertices();
        if n > 24 {
            return None;
        }
        let masks: Vec<u32> = self.graph.edges().iter().map(|&(u, v)| (1u32 << u) | (1u32 << v)).collect();
        let mut best = n as u64;
        for subset in 0u32..(1u32 << n) {
            let size = subset.count_ones() as u64;
            if size < best && masks.iter().all(|&m| subset & m != 0) {
                best = size;
            }
        }
        Some(best)
    }

    pub fn start(&self, seed: u64) -> MvcState<'_> {
        let mut rng = SplitMix64::stream(seed, "mvc-ga");
        let n = self.graph.vertices();
        let population: Vec<Individual> = (0..self.population.max(2))
            .map(|_| {
                let genes: Vec<bool> = (0..n).map(|_| rng.chance(0.5)).collect();
                Individual { fitness: self.fitness(&genes), genes }
            })
            .collect();
        let best = population.iter().min_by_key(|i| i.fitness).cloned().expect("population is nonempty");
        MvcState { problem: self, rng, population, best, generation: 0 }
    }
}

#[derive(Debug, Clone)]
struct Individual {
    genes: Vec<bool>,
    fitness: u64,
}

pub struct MvcState<'a> {
    problem: &'a MvcProblem,
    rng: SplitMix64,
    population: Vec<Individual>,
    best: Individual,
    generation: u64,
}

impl MvcState<'_> {
    pub fn best_cover(&self) -> &[bool] {
        &self.best.genes
    }

    fn tournament(&mut self) -> usize {
        let a = self.rng.index(self.population.len());
        let b = self.rng.index(self.population.len());
        if self.population[a].fitness <= self.population[b].fitness {
            a
        } else {
            b
        }
    }
}

impl AnytimeOptimizer for MvcState<'_> {
    fn step(&mut self) {
        let problem = self.problem;
        let n = problem.graph.vertices();
        self.population.sort_by_key(|i| i.fitness);
        let mut next: Vec<Individual> = self.population.iter().take(problem.elite).cloned().collect();
        while next.len() < self.population.len() {
            let a = self.tournament();
            let b = self.tournament();
            let mut genes = Vec::with_capacity(n);
            for v in 0..n {
                let gene = if self.rng.chance(0.5) { self.population[a].genes[v] } else { self.population[b].genes[v] };
                genes.push(gene ^ self.rng.chance(problem.mutation_rate));
            }
            let fitness = problem.fitness(&genes);
            next.push(Individual { genes, fitness });
        }
        self.population = next;
        self.generation += 1;
        if let Some(champion) = self.population.iter().min_by_key(|i| i.fitness) {
            if champion.fitness < self.best.fitness {
                self.best = champion.clone();
            }
        }
    }

    fn best_score(&self) -> f64 {
        self.best.fitness as f64
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        let edges = self.problem.graph.edges().len();
        let uncovered = self.problem.graph.uncovered(&self.best.genes);
        let coverage = if edges == 0 { 100.0 } else { 100.0 * (edges - uncovered) as f64 / edges as f64 };
        let size = self.best.genes.iter().filter(|&&b| b).count();
        BTreeMap::from([("coverage".to_string(), coverage), ("solution_size".to_string(), size as f64)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(graph: Graph) -> MvcProblem {
        MvcProblem { graph, population: 30, mutation_rate: 0.05, elite: 2 }
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert_eq!(Graph::new(3, [(0, 1), (1, 2)]).unwrap().edges().len(), 2);
    }

    #[test]
    fn feasible_beats_infeasible() {
        let p = problem(Graph::complete(4));
        let all = vec![true; 4];
        let missing_two = vec![true, true, false, false];
        assert_eq!(p.fitness(&all), 4);
        assert_eq!(p.fitness(&missing_two), 4 + 2);
    }

    #[test]
    fn triangle_and_star_optima() {
        assert_eq!(problem(Graph::complete(3)).brute_force_optimum(), Some(2));
        let star = Graph::new(6, (1..6).map(|v| (0, v))).unwrap();
        assert_eq!(problem(star).brute_force_optimum(), Some(1));
        assert_eq!(problem(Graph::complete(25)).brute_force_optimum(), None);
    }

    #[test]
    fn archive_never_regresses() {
        let mut rng = SplitMix64::new(3);
        let p = problem(Graph::random(20, 0.3, &mut rng));
        let mut s = p.start(11);
        let mut last = s.best_score();
        for _ in 0..200 {
            s.step();
            assert!(s.best_score() <= last);
            last = s.best_score();
        }
    }

    #[test]
    fn ga_finds_small_optimum() {
        let mut rng = SplitMix64::new(5);
        let p = problem(Graph::random(12, 0.3, &mut rng));
        let opt = p.brute_force_optimum().unwrap() as f64;
        let mut s = p.start(1);
        for _ in 0..300 {
            s.step();
        }
        assert_eq!(s.best_score(), opt);
        assert_eq!(p.graph.uncovered(s.best_cover()), 0);
    }
}
