//! Built-in verification backend: a bounded, exhaustive interpreter for the
//! mini-C subset.
//!
//! Every `__VERIFIER_nondet_*()` assignment must be bounded by immediately
//! following `assume` statements of the shape `lo <= v` / `v <= hi`
//! (reversed operand order and `&&` conjunctions included). The backend
//! enumerates all valuations in the derived ranges and executes every
//! trace:
//!
//! - FALSE with a counterexample valuation as soon as a trace reaches
//!   ERROR (a failed `assert` or a `reach_error()` call);
//! - TRUE when every trace completed within the limits — the verdict is
//!   sound because enumeration was exhaustive;
//! - UNKNOWN when a range is unbounded, a trace exceeds `max_steps`, the
//!   valuation count exceeds `max_states`, the deadline passes, or the
//!   program falls outside the supported subset.
//!
//! Timing is deterministic: the reported cost is `steps * 1e-6` seconds,
//! where one step is one executed statement. A `while` or `if` costs one
//! step per condition evaluation (including the re-check at the end of
//! each loop body pass); a declaration statement costs one step regardless
//! of how many names it declares. Determinism of both the cost and the
//! explored order is what makes pipeline outputs byte-stable across runs.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use super::minic::{parse_program, BlockId, Init, MiniProgram, NondetKind, Stmt};
use super::{BackendReply, OracleBackend, Outcome};
use crate::predicate::{eval_expr, BinOp, Env, PredExpr};

/// Abstract seconds charged per executed statement.
const STEP_SECONDS: f64 = 1e-6;

/// How often (in steps) the wall-clock deadline is polled.
const DEADLINE_POLL_MASK: u64 = 0xFFF;

/// Exploration limits.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    /// Maximum number of enumerated nondet valuations (machines).
    pub max_states: u64,
    /// Maximum executed statements per trace.
    pub max_steps: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 1_000_000,
            max_steps: 1_000_000,
        }
    }
}

/// Backend wrapper around [`builtin_check`].
#[derive(Debug, Clone, Default)]
pub struct BuiltinBackend {
    pub limits: Limits,
}

impl OracleBackend for BuiltinBackend {
    fn check(&self, annotated_source: &str, timeout: Duration) -> BackendReply {
        builtin_check(annotated_source, &self.limits, timeout)
    }

    fn name(&self) -> &str {
        "builtin"
    }
}

#[derive(Clone, Copy)]
enum Frame {
    Seq {
        block: BlockId,
        pc: usize,
    },
    /// Executing the body of `blocks[owner][at]` (a `While`); `pc` indexes
    /// into the body block.
    Loop {
        owner: BlockId,
        at: usize,
        pc: usize,
    },
}

#[derive(Clone)]
struct Machine {
    frames: Vec<Frame>,
    env: Env,
    choices: Vec<(String, BigInt)>,
    steps: u64,
}

/// Decide an annotated program by exhaustive bounded interpretation.
pub fn builtin_check(source: &str, limits: &Limits, timeout: Duration) -> BackendReply {
    let program = match parse_program(source) {
        Ok(p) => p,
        Err(e) => {
            // No execution happened: report a deterministic zero cost so
            // records stay byte-stable across runs.
            return BackendReply {
                outcome: Outcome::Unknown,
                self_time: Some(0.0),
                diagnostic: Some(format!(
                    "unsupported construct at offset {}: {}",
                    e.pos, e.msg
                )),
            };
        }
    };
    let deadline = Instant::now() + timeout;
    let mut exec = Executor {
        program: &program,
        limits,
        deadline,
        timeout_secs: timeout.as_secs_f64(),
        total_steps: 0,
        states: 1,
    };
    exec.run()
}

struct Executor<'p> {
    program: &'p MiniProgram,
    limits: &'p Limits,
    deadline: Instant,
    timeout_secs: f64,
    total_steps: u64,
    states: u64,
}

enum TraceEnd {
    /// Trace finished without reaching ERROR (completion, failed assume,
    /// `abort()`, or `return`).
    Ok,
    /// Trace reached ERROR.
    Failed(Vec<(String, BigInt)>),
    /// Execution forked on a nondet assignment; continuations were pushed.
    Forked,
    Undecidable(String),
}

impl Executor<'_> {
    fn cost(&self) -> f64 {
        self.total_steps as f64 * STEP_SECONDS
    }

    fn reply(&self, outcome: Outcome, diagnostic: Option<String>) -> BackendReply {
        BackendReply {
            outcome,
            self_time: Some(self.cost()),
            diagnostic,
        }
    }

    fn run(&mut self) -> BackendReply {
        let initial = Machine {
            frames: vec![Frame::Seq {
                block: self.program.main_block,
                pc: 0,
            }],
            env: Env::new(),
            choices: Vec::new(),
            steps: 0,
        };
        let mut worklist = vec![initial];
        while let Some(machine) = worklist.pop() {
            match self.run_machine(machine, &mut worklist) {
                TraceEnd::Ok | TraceEnd::Forked => {}
                TraceEnd::Failed(choices) => {
                    let cex = if choices.is_empty() {
                        "counterexample: deterministic trace".to_string()
                    } else {
                        let vals: Vec<String> =
                            choices.iter().map(|(n, v)| format!("{n} = {v}")).collect();
                        format!("counterexample: {}", vals.join(", "))
                    };
                    return self.reply(Outcome::False, Some(cex));
                }
                TraceEnd::Undecidable(msg) => {
                    return self.reply(Outcome::Unknown, Some(msg));
                }
            }
        }
        self.reply(Outcome::True, None)
    }

    fn run_machine(&mut self, mut m: Machine, worklist: &mut Vec<Machine>) -> TraceEnd {
        loop {
            let Some(frame) = m.frames.last_mut() else {
                return TraceEnd::Ok;
            };
            let (block, pc_ref) = match frame {
                Frame::Seq { block, pc } => (*block, pc),
                Frame::Loop { owner, at, pc } => {
                    let Stmt::While(cond, body) = &self.program.blocks[*owner][*at] else {
                        unreachable!("loop frame must reference a while statement");
                    };
                    if *pc >= self.program.blocks[*body].len() {
                        // End of body: charge a step for the re-check.
                        if let Err(end) = self.tick(&mut m.steps) {
                            return end;
                        }
                        match eval_truth_or(cond, &m.env) {
                            Ok(true) => {
                                *pc = 0;
                            }
                            Ok(false) => {
                                m.frames.pop();
                            }
                            Err(msg) => return TraceEnd::Undecidable(msg),
                        }
                        continue;
                    }
                    (*body, pc)
                }
            };
            if *pc_ref >= self.program.blocks[block].len() {
                m.frames.pop();
                continue;
            }
            let at = *pc_ref;
            *pc_ref += 1;
            if let Err(end) = self.tick(&mut m.steps) {
                return end;
            }
            let stmt = &self.program.blocks[block][at];
            match stmt {
                Stmt::Skip => {}
                Stmt::Return => return TraceEnd::Ok,
                Stmt::Abort => return TraceEnd::Ok,
                Stmt::ReachError => return TraceEnd::Failed(m.choices),
                Stmt::Break => loop {
                    match m.frames.pop() {
                        Some(Frame::Loop { .. }) => break,
                        Some(Frame::Seq { .. }) => {}
                        None => return TraceEnd::Undecidable("break outside loop".to_string()),
                    }
                },
                Stmt::Decl(items) => {
                    for (idx, (name, init)) in items.iter().enumerate() {
                        match init {
                            Init::Uninit => {
                                m.env.remove(name);
                            }
                            Init::Expr(e) => match eval_expr(e, &m.env) {
                                Ok(v) => {
                                    m.env.insert(name.clone(), v);
                                }
                                Err(e) => {
                                    return TraceEnd::Undecidable(format!(
                                        "initializer of `{name}`: {e}"
                                    ))
                                }
                            },
                            Init::Nondet(kind) => {
                                // The continuation resumes after the whole
                                // declaration, so a nondet initializer must
                                // be its last item.
                                if idx + 1 != items.len() {
                                    return TraceEnd::Undecidable(format!(
                                        "nondet initializer of `{name}` must end its declaration"
                                    ));
                                }
                                return self.fork_nondet(m, worklist, block, at, name, kind);
                            }
                        }
                    }
                }
                Stmt::Assign(name, e) => match eval_expr(e, &m.env) {
                    Ok(v) => {
                        m.env.insert(name.clone(), v);
                    }
                    Err(e) => return TraceEnd::Undecidable(format!("assignment to `{name}`: {e}")),
                },
                Stmt::AssignNondet(name, kind) => {
                    return self.fork_nondet(m, worklist, block, at, name, kind)
                }
                Stmt::Assume(e) => match eval_truth_or(e, &m.env) {
                    Ok(true) => {}
                    Ok(false) => return TraceEnd::Ok,
                    Err(msg) => return TraceEnd::Undecidable(msg),
                },
                Stmt::Assert(e) => match eval_truth_or(e, &m.env) {
                    Ok(true) => {}
                    Ok(false) => return TraceEnd::Failed(m.choices),
                    Err(msg) => return TraceEnd::Undecidable(msg),
                },
                Stmt::While(cond, _) => match eval_truth_or(cond, &m.env) {
                    Ok(true) => {
                        m.frames.push(Frame::Loop {
                            owner: block,
                            at,
                            pc: 0,
                        });
                    }
                    Ok(false) => {}
                    Err(msg) => return TraceEnd::Undecidable(msg),
                },
                Stmt::If(cond, then_block, else_block) => match eval_truth_or(cond, &m.env) {
                    Ok(true) => m.frames.push(Frame::Seq {
                        block: *then_block,
                        pc: 0,
                    }),
                    Ok(false) => {
                        if let Some(eb) = else_block {
                            m.frames.push(Frame::Seq { block: *eb, pc: 0 });
                        }
                    }
                    Err(msg) => return TraceEnd::Undecidable(msg),
                },
            }
        }
    }

    fn tick(&mut self, machine_steps: &mut u64) -> Result<(), TraceEnd> {
        self.total_steps += 1;
        *machine_steps += 1;
        if *machine_steps > self.limits.max_steps {
            return Err(TraceEnd::Undecidable(format!(
                "trace exceeded max_steps = {}",
                self.limits.max_steps
            )));
        }
        if self.total_steps & DEADLINE_POLL_MASK == 0
            && (self.cost() >= self.timeout_secs || Instant::now() >= self.deadline)
        {
            return Err(TraceEnd::Undecidable("timeout".to_string()));
        }
        Ok(())
    }

    /// Enumerate the nondet range for `name` and push one continuation per
    /// value. The machine's program counter already points past the nondet
    /// statement, so the clones resume right after it; the bounding assume
    /// statements still execute in each clone and filter as usual.
    fn fork_nondet(
        &mut self,
        m: Machine,
        worklist: &mut Vec<Machine>,
        block: BlockId,
        at: usize,
        name: &str,
        kind: &NondetKind,
    ) -> TraceEnd {
        let following = &self.program.blocks[block][at + 1..];
        let (mut lo, mut hi) = match kind {
            NondetKind::Bool => (Some(BigInt::from(0)), Some(BigInt::from(1))),
            NondetKind::Int => (None, None),
        };
        for stmt in following {
            let Stmt::Assume(e) = stmt else { break };
            collect_bounds(e, name, &mut lo, &mut hi);
        }
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return TraceEnd::Undecidable(format!(
                "nondet range for `{name}` is not bounded by the following assume statements"
            ));
        };
        if lo > hi {
            // Empty range: the assumes are unsatisfiable and every
            // continuation would halt at them anyway.
            return TraceEnd::Ok;
        }
        let width = (&hi - &lo + 1u32).to_u64();
        match width {
            Some(w) if self.states.saturating_add(w) <= self.limits.max_states => {
                self.states += w;
            }
            _ => {
                return TraceEnd::Undecidable(format!(
                    "nondet range for `{name}` ({lo}..={hi}) exceeds max_states = {}",
                    self.limits.max_states
                ))
            }
        }
        let mut value = lo;
        while value <= hi {
            let mut clone = m.clone();
            clone.env.insert(name.to_string(), value.clone());
            clone.choices.push((name.to_string(), value.clone()));
            worklist.push(clone);
            value += 1u32;
        }
        TraceEnd::Forked
    }
}

fn eval_truth_or(e: &PredExpr, env: &Env) -> Result<bool, String> {
    match eval_expr(e, env) {
        Ok(v) => Ok(!v.is_zero()),
        Err(err) => Err(format!("in condition: {err}")),
    }
}

/// Extract `lo <= name` / `name <= hi` bounds (and reversed `>=` forms)
/// from the conjuncts of an assume predicate. Conjuncts of any other shape
/// contribute nothing; they still run as ordinary assume filters.
fn collect_bounds(e: &PredExpr, name: &str, lo: &mut Option<BigInt>, hi: &mut Option<BigInt>) {
    match e {
        PredExpr::Binary(BinOp::And, l, r) => {
            collect_bounds(l, name, lo, hi);
            collect_bounds(r, name, lo, hi);
        }
        PredExpr::Binary(op @ (BinOp::Le | BinOp::Ge), l, r) => {
            let (small, large) = if *op == BinOp::Le { (l, r) } else { (r, l) };
            if let (Some(c), true) = (constant_of(small), is_var(large, name)) {
                raise_lower(lo, c)
            }
            if let (true, Some(c)) = (is_var(small, name), constant_of(large)) {
                lower_upper(hi, c)
            }
        }
        _ => {}
    }
}

fn raise_lower(lo: &mut Option<BigInt>, c: BigInt) {
    match lo {
        Some(cur) if *cur >= c => {}
        _ => *lo = Some(c),
    }
}

fn lower_upper(hi: &mut Option<BigInt>, c: BigInt) {
    match hi {
        Some(cur) if *cur <= c => {}
        _ => *hi = Some(c),
    }
}

fn is_var(e: &PredExpr, name: &str) -> bool {
    matches!(e, PredExpr::Var(n) if n == name)
}

fn constant_of(e: &PredExpr) -> Option<BigInt> {
    match e {
        PredExpr::IntLit(v) => Some(v.clone()),
        PredExpr::BoolLit(b) => Some(BigInt::from(*b as i8)),
        PredExpr::Unary(crate::predicate::UnOp::Neg, inner) => constant_of(inner).map(|v| -v),
        _ => None,
    }
}
