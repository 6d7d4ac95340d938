//! Euclidean TSP with first-improvement 2-opt and random restarts.

use std::collections::BTreeMap;

use crate::rng::SplitMix64;

use super::AnytimeOptimizer;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TspProblem {
    cities: Vec<(f64, f64)>,
    dist: Vec<f64>,
}

impl TspProblem {
    pub fn new(cities: Vec<(f64, f64)>) -> Self {
        let n = cities.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (cities[i].0 - cities[j].0, cities[i].1 - cities[j].1);
                dist[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        Self { cities, dist }
    }

    /// Cities uniform in the unit square scaled by 100.
    pub fn random(n: usize, rng: &mut SplitMix64) -> Self {
        Self::new((0..n).map(|_| (100.0 * rng.next_f64(), 100.0 * rng.next_f64())).collect())
    }

    pub fn unit_square() -> Self {
        Self::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    #[inline]
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.cities.len() + b]
    }

    pub fn tour_length(&self, tour: &[usize]) -> f64 {
        if tour.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..tour.len() {
            total += self.d(tour[i], tour[(i + 1) % tour.len()]);
        }
        total
    }

    /// Exhaustive optimum with city 0 fixed; `None` above 10 cities.
    pub fn brute_force_optimum(&self) -> Option<f64> {
        let n = self.len();
        if n > 10 {
            return None;
        }
        if n < 2 {
            return Some(0.0);
        }
        let mut rest: Vec<usize> = (1..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut rest, 0, &mut |perm| {
            let mut tour = Vec::with_capacity(n);
            tour.push(0);
            tour.extend_from_slice(perm);
            best = best.min(self.tour_length(&tour));
        });
        Some(best)
    }

    pub fn start(&self, seed: u64) -> TspState<'_> {
        let mut rng = SplitMix64::stream(seed, "tsp-2opt");
        let tour = random_tour(self.len(), &mut rng);
        let length = self.tour_length(&tour);
        TspState { problem: self, rng, best: length, best_tour: tour.clone(), tour, length, local_optimum: false, restarts: 0 }
    }
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn random_tour(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut tour: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut tour);
    tour
}

pub struct TspState<'a> {
    problem: &'a TspProblem,
    rng: SplitMix64,
    tour: Vec<usize>,
    length: f64,
    best: f64,
    best_tour: Vec<usize>,
    local_optimum: bool,
    restarts: u64,
}

impl TspState<'_> {
    pub fn current_length(&self) -> f64 {
        self.length
    }

    pub fn best_tour(&self) -> &[usize] {
        &self.best_tour
    }

    /// The current tour admits no improving 2-opt move.
    pub fn at_local_optimum(&self) -> bool {
        self.local_optimum
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Applies the first strictly improving 2-opt move; returns whether one existed.
    fn two_opt_move(&mut self) -> bool {
        let n = self.tour.len();
        if n < 4 {
            return false;
        }
        let p = self.problem;
        for i in 0..n - 1 {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (self.tour[i], self.tour[i + 1]);
                let (c, d) = (self.tour[j], self.tour[(j + 1) % n]);
                let delta = p.d(a, c) + p.d(b, d) - p.d(a, b) - p.d(c, d);
                if delta < -EPS {
                    self.tour[i + 1..=j].reverse();
                    return true;
                }
            }
        }
        false
    }
}

impl AnytimeOptimizer for TspState<'_> {
    fn step(&mut self) {
        if self.local_optimum {
            self.tour = random_tour(self.tour.len(), &mut self.rng);
            self.length = self.problem.tour_length(&self.tour);
            self.local_optimum = false;
            self.restarts += 1;
        } else if self.two_opt_move() {
            self.length = self.problem.tour_length(&self.tour);
        } else {
            self.local_optimum = true;
        }
        if self.length < self.best {
            self.best = self.length;
            self.best_tour.clone_from(&self.tour);
        }
    }

    fn best_score(&self) -> f64 {
        self.best
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}
