use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Stable diagnostic codes. The string forms are part of the CLI output
/// contract and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Code {
    Syntax,
    UnknownKey,
    MissingKey,
    TypeMismatch,
    BadEnum,
    UnsupportedVersion,
    DuplicateName,
    DanglingRef,
    ThreadingNotImplemented,
    BadLifecyclePrimitive,
    NonpositivePeriod,
    BadInitial,
    PeriodicHasInputs,
    PeriodicReturnOutput,
    InputNotInFormat,
    FormatFieldNotInput,
    OutputNotInFormat,
    MissingReadFormat,
    FieldOutOfFrame,
    OverlappingFields,
    WidthEncodingMismatch,
    BadPrefix,
    BadDelimiter,
    MixedReadFraming,
    ExprSyntax,
    UnboundName,
    MissingArg,
    UnknownArg,
    IncompleteMapping,
    TelemetryInterfaceHasCalls,
    MissingConstant,
    UnusedPrimitive,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Syntax => "syntax",
            Code::UnknownKey => "unknown-key",
            Code::MissingKey => "missing-key",
            Code::TypeMismatch => "type-mismatch",
            Code::BadEnum => "bad-enum",
            Code::UnsupportedVersion => "unsupported-version",
            Code::DuplicateName => "duplicate-name",
            Code::DanglingRef => "dangling-ref",
            Code::ThreadingNotImplemented => "threading-not-implemented",
            Code::BadLifecyclePrimitive => "bad-lifecycle-primitive",
            Code::NonpositivePeriod => "nonpositive-period",
            Code::BadInitial => "bad-initial",
            Code::PeriodicHasInputs => "periodic-has-inputs",
            Code::PeriodicReturnOutput => "periodic-return-output",
            Code::InputNotInFormat => "input-not-in-format",
            Code::FormatFieldNotInput => "format-field-not-input",
            Code::OutputNotInFormat => "output-not-in-format",
            Code::MissingReadFormat => "missing-read-format",
            Code::FieldOutOfFrame => "field-out-of-frame",
            Code::OverlappingFields => "overlapping-fields",
            Code::WidthEncodingMismatch => "width-encoding-mismatch",
            Code::BadPrefix => "bad-prefix",
            Code::BadDelimiter => "bad-delimiter",
            Code::MixedReadFraming => "mixed-read-framing",
            Code::ExprSyntax => "expr-syntax",
            Code::UnboundName => "unbound-name",
            Code::MissingArg => "missing-arg",
            Code::UnknownArg => "unknown-arg",
            Code::IncompleteMapping => "incomplete-mapping",
            Code::TelemetryInterfaceHasCalls => "telemetry-interface-has-calls",
            Code::MissingConstant => "missing-constant",
            Code::UnusedPrimitive => "unused-primitive",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Location inside a document, rendered like `primitives[0].connection`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocPath(String);

impl DocPath {
    pub fn root() -> Self {
        DocPath(String::new())
    }

    pub fn key(&self, key: &str) -> Self {
        if self.0.is_empty() {
            DocPath(key.to_string())
        } else {
            DocPath(format!("{}.{key}", self.0))
        }
    }

    pub fn index(&self, i: usize) -> Self {
        DocPath(format!("{}[{i}]", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("<root>")
        } else {
            f.write_str(&self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub path: DocPath,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: Code, path: DocPath, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code,
            path,
            message: message.into(),
        }
    }

    pub fn warning(code: Code, path: DocPath, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code,
            path,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}] {}: {}", self.severity, self.code, self.path, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
