use std::fmt;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Run,
    Io,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Category::Config => 3,
            Category::Data => 4,
            Category::Run => 5,
            Category::Io => 6,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Category::Config => "config error",
            Category::Data => "data error",
            Category::Run => "run failed",
            Category::Io => "i/o error",
        }
    }
}

pub const EXIT_USAGE: u8 = 2;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag or subcommand, bad flag value)
  3  config error (unreadable or invalid config file, invalid model or search space)
  4  data error (unreadable dataset or checkpoint, schema violation, invalid graph)
  5  run failed (non-finite loss, every HPO trial failed)
  6  i/o error while writing artifacts";

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.category.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category.label(), self.message)
    }
}

impl From<atomgraph::Error> for CliError {
    fn from(e: atomgraph::Error) -> Self {
        use atomgraph::Error as E;
        let category = match &e {
            E::InvalidConfig(_) | E::HeadDivisibility { .. } | E::SearchSpace(_) => Category::Config,
            E::Schema { .. }
            | E::Data(_)
            | E::InvalidGraph(_)
            | E::NonFiniteCoordinate { .. }
            | E::BatchMismatch { .. }
            | E::ChannelWidth { .. }
            | E::MissingChannel { .. }
            | E::CoincidentPoints { .. }
            | E::MissingPositions(_)
            | E::UnsupportedElement { .. }
            | E::Checkpoint(_)
            | E::Json(_)
            | E::InvalidPermutation { .. } => Category::Data,
            E::Io(_) => Category::Io,
            _ => Category::Run,
        };
        Self::new(category, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn context(self, category: Category, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn context(self, category: Category, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(category, format!("{what}: {e}")))
    }
}
