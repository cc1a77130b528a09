//! C-like integer evaluation of predicate expressions.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use super::{BinOp, PredExpr, UnOp};

/// Variable bindings for evaluation.
pub type Env = BTreeMap<String, BigInt>;

/// Evaluation failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Evaluate with C-like integer semantics over arbitrary-precision integers.
///
/// Relational and logical operators return 0 or 1; `&&` and `||`
/// short-circuit; division truncates toward zero and `%` takes the sign of
/// the dividend; casts are identity on the mathematical value.
pub fn eval_expr(expr: &PredExpr, env: &Env) -> Result<BigInt, EvalError> {
    match expr {
        PredExpr::IntLit(v) => Ok(v.clone()),
        PredExpr::BoolLit(b) => Ok(BigInt::from(*b as i8)),
        PredExpr::Var(name) => env
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        PredExpr::Cast(_, operand) => eval_expr(operand, env),
        PredExpr::Unary(op, operand) => {
            let v = eval_expr(operand, env)?;
            Ok(match op {
                UnOp::Neg => -v,
                UnOp::LogNot => BigInt::from(v.is_zero() as i8),
            })
        }
        PredExpr::Binary(BinOp::And, lhs, rhs) => {
            if eval_expr(lhs, env)?.is_zero() {
                Ok(BigInt::from(0))
            } else {
                Ok(BigInt::from(!eval_expr(rhs, env)?.is_zero() as i8))
            }
        }
        PredExpr::Binary(BinOp::Or, lhs, rhs) => {
            if !eval_expr(lhs, env)?.is_zero() {
                Ok(BigInt::from(1))
            } else {
                Ok(BigInt::from(!eval_expr(rhs, env)?.is_zero() as i8))
            }
        }
        PredExpr::Binary(op, lhs, rhs) => {
            let a = eval_expr(lhs, env)?;
            let b = eval_expr(rhs, env)?;
            let bool_result = |cond: bool| BigInt::from(cond as i8);
            Ok(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.is_zero() {
                        return Err(EvalError::DivisionByZero);
                    }
                    a / b
                }
                BinOp::Rem => {
                    if b.is_zero() {
                        return Err(EvalError::DivisionByZero);
                    }
                    a % b
                }
                BinOp::Lt => bool_result(a < b),
                BinOp::Le => bool_result(a <= b),
                BinOp::Gt => bool_result(a > b),
                BinOp::Ge => bool_result(a >= b),
                BinOp::Eq => bool_result(a == b),
                BinOp::Ne => bool_result(a != b),
                BinOp::And | BinOp::Or => unreachable!("handled above"),
            })
        }
        PredExpr::Ternary(cond, then, els) => {
            if eval_expr(cond, env)?.is_zero() {
                eval_expr(els, env)
            } else {
                eval_expr(then, env)
            }
        }
    }
}
