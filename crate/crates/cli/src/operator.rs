//! Human-in-the-loop evaluation: real trials are run by an operator who types
//! the measured cost back in.

use std::io::{BufRead, Write};

use simreal_core::gait_sim::GaitParams;
use simreal_core::optimizer::{EvalOutcome, Evaluation, Evaluator, GaitEvaluator};
use simreal_core::Fidelity;

/// Invalid entries accepted before a prompt counts as `skip`.
pub const MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPrompt {
    pub index: usize,
    pub gains: GaitParams,
    pub x: Vec<f64>,
    pub text: String,
}

/// Where typed answers come from. `None` means the input closed.
pub trait CostSource {
    fn answer(&mut self, prompt: &OperatorPrompt, attempt: usize) -> Option<String>;
}

/// Prompts on a writer and reads lines from a reader.
pub struct Terminal<R, W> {
    pub input: R,
    pub output: W,
}

impl<R: BufRead, W: Write> CostSource for Terminal<R, W> {
    fn answer(&mut self, prompt: &OperatorPrompt, attempt: usize) -> Option<String> {
        if attempt > 0 {
            let _ = writeln!(self.output, "Not a finite number. Enter a cost, `skip` or `abort`.");
        }
        let _ = write!(self.output, "{}", prompt.text);
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entry {
    Cost(f64),
    Skip,
    Abort,
    Invalid,
}

fn parse_entry(s: &str) -> Entry {
    match s.trim() {
        "skip" => Entry::Skip,
        "abort" => Entry::Abort,
        t => match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Entry::Cost(v),
            _ => Entry::Invalid,
        },
    }
}

/// Simulation evaluations run as usual; real ones go to the operator.
pub struct OperatorEvaluator<'a, S> {
    pub sim: GaitEvaluator<'a>,
    pub source: S,
}

impl<S: CostSource> OperatorEvaluator<'_, S> {
    fn prompt(&self, x: &[f64], index: usize) -> OperatorPrompt {
        let gains = self.sim.gains(x);
        let text = format!(
            "\n[evaluation {index}] Real trial requested.\n  P gain = {:.4} (1)\n  D gain = {:.4} (s)\n\
             Run the test sequence with these gains and enter the measured cost, `skip` or `abort`: ",
            gains.p_gain, gains.d_gain
        );
        OperatorPrompt { index, gains, x: x.to_vec(), text }
    }
}

impl<S: CostSource> Evaluator for OperatorEvaluator<'_, S> {
    fn evaluate(&mut self, x: &[f64], fidelity: Fidelity, index: usize) -> simreal_core::Result<EvalOutcome> {
        if fidelity == Fidelity::Simulation {
            return self.sim.evaluate(x, fidelity, index);
        }
        let prompt = self.prompt(x, index);
        for attempt in 0..MAX_ATTEMPTS {
            let Some(line) = self.source.answer(&prompt, attempt) else {
                return Ok(EvalOutcome::Abort);
            };
            match parse_entry(&line) {
                Entry::Cost(cost) => {
                    let elapsed_s = self.sim.problem.sequence.duration();
                    return Ok(EvalOutcome::Cost(Evaluation { cost, repeats: 1, falls: 0, elapsed_s }));
                }
                Entry::Skip => return Ok(EvalOutcome::Skip),
                Entry::Abort => return Ok(EvalOutcome::Abort),
                Entry::Invalid => {}
            }
        }
        Ok(EvalOutcome::Skip)
    }
}
