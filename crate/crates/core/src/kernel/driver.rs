//! Sources of decisions for proposal construction.
//!
//! Every categorical choice a kernel makes goes through a [`Driver`]. Drawing
//! at random gives the ordinary proposal; following a hint toward a known
//! target gives forced replay; following a script lets the oracle walk the
//! whole choice tree.

use rand::Rng;

use crate::model::Target;
use crate::sweep::inverse_cdf;
use crate::state::Assignment;

/// What is being decided.
#[derive(Clone, Copy, Debug)]
pub enum ChoiceKind<'a> {
    /// A fixed-probability choice not tied to `q` (e.g. random launch states).
    Uniform,
    /// A sweep moving `set` into one of `candidates` of `asg`.
    Sweep {
        asg: &'a Assignment,
        set: &'a [usize],
        candidates: &'a [Target],
    },
}

/// One categorical decision.
#[derive(Clone, Copy, Debug)]
pub struct ChoicePoint<'a> {
    pub kind: ChoiceKind<'a>,
    pub probs: &'a [f64],
    /// The index consistent with the driver's target, when it has one and
    /// the target is still reachable.
    pub hint: Option<usize>,
}

pub trait Driver {
    /// The chosen index, or `None` to abandon construction.
    fn pick(&mut self, point: &ChoicePoint<'_>) -> Option<usize>;

    /// Per-observation labels of the partition to steer toward, if any.
    fn target(&self) -> Option<&[usize]> {
        None
    }
}

/// Draws every choice with one uniform via inverse CDF.
pub struct RandomDriver<'r, R: Rng + ?Sized>(pub &'r mut R);

impl<R: Rng + ?Sized> Driver for RandomDriver<'_, R> {
    fn pick(&mut self, point: &ChoicePoint<'_>) -> Option<usize> {
        Some(inverse_cdf(point.probs, self.0.random::<f64>()))
    }
}

/// Steers every choice toward a fixed target partition.
pub struct ReplayDriver<'a> {
    target: &'a [usize],
}

impl<'a> ReplayDriver<'a> {
    pub fn new(target: &'a [usize]) -> Self {
        Self { target }
    }
}

impl Driver for ReplayDriver<'_> {
    fn pick(&mut self, point: &ChoicePoint<'_>) -> Option<usize> {
        point.hint
    }

    fn target(&self) -> Option<&[usize]> {
        Some(self.target)
    }
}

/// One recorded decision of a [`ScriptedDriver`].
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub chosen: usize,
    pub probs: Vec<f64>,
    /// Log probability of the choice recomputed by the inspector, if any.
    pub check: Option<f64>,
}

type Inspector<'a> = Box<dyn FnMut(&ChoicePoint<'_>, usize) -> f64 + 'a>;

/// Follows a prefix of indices, then always takes the first choice with
/// positive probability. Re-running with [`ScriptedDriver::next_prefix`]
/// walks the choice tree depth first.
pub struct ScriptedDriver<'a> {
    prefix: Vec<usize>,
    steps: Vec<Step>,
    inspect: Option<Inspector<'a>>,
}

impl<'a> ScriptedDriver<'a> {
    pub fn new(prefix: Vec<usize>) -> Self {
        Self {
            prefix,
            steps: Vec::new(),
            inspect: None,
        }
    }

    /// Also records an independent evaluation of every chosen probability.
    pub fn with_inspector(
        prefix: Vec<usize>,
        inspect: impl FnMut(&ChoicePoint<'_>, usize) -> f64 + 'a,
    ) -> Self {
        Self {
            prefix,
            steps: Vec::new(),
            inspect: Some(Box::new(inspect)),
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn choices(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.chosen).collect()
    }

    /// The prefix of the next leaf in depth-first order, or `None` when the
    /// recorded path was the last one.
    pub fn next_prefix(&self) -> Option<Vec<usize>> {
        for (pos, step) in self.steps.iter().enumerate().rev() {
            let later = (step.chosen + 1..step.probs.len()).find(|&k| step.probs[k] > 0.0);
            if let Some(k) = later {
                let mut p: Vec<usize> = self.steps[..pos].iter().map(|s| s.chosen).collect();
                p.push(k);
                return Some(p);
            }
        }
        None
    }
}

impl Driver for ScriptedDriver<'_> {
    fn pick(&mut self, point: &ChoicePoint<'_>) -> Option<usize> {
        let pos = self.steps.len();
        let chosen = match self.prefix.get(pos) {
            Some(&k) => k,
            None => point.probs.iter().position(|&p| p > 0.0)?,
        };
        if chosen >= point.probs.len() {
            return None;
        }
        let check = self.inspect.as_mut().map(|f| f(point, chosen));
        self.steps.push(Step {
            chosen,
            probs: point.probs.to_vec(),
            check,
        });
        Some(chosen)
    }
}
