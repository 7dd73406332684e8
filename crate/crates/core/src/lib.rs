//! Core library for RDIS device descriptions: the document model, parser
//! and validator, expression language, wire codec, differential-drive
//! kinematics and driver code generation.

pub mod canonical;
pub mod codec;
pub mod codegen;
pub mod diag;
pub mod expr;
pub mod kinematics;
pub mod model;
pub mod number;
pub mod parse;
pub mod template;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod validate;

pub use canonical::{canonical_text, canonicalize, CanonicalError};
pub use codec::{decode, encode, frame_scan, CodecError, FieldValues, Frame, FrameAssembler};
pub use codegen::{generate, list_targets, CodegenError, GeneratedArtifact, TargetInfo};
pub use diag::{has_errors, Code, Diagnostic, DocPath, Severity};
pub use expr::{parse_expr, Env, EvalError, ExprAst, ExprSyntaxError};
pub use kinematics::{forward, integrate_pose, inverse, normalize_angle, KinematicsError, Pose, Twist, WheelSpeeds};
pub use model::*;
pub use number::format_number;
pub use parse::{diagnose, parse_document, parse_structure};
pub use validate::validate;
