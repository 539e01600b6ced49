"""Cost-program DSL, exemplar costs, LLM client and gesture synthesis."""

from .dsl import (CostProgram, DslError, IndexOutOfRange, ParseError, ProgramCost, TypeMismatch,
                  UnknownSymbol, eval_cost, parse_cost, to_source)
from .generate import GestureResult, generate_gesture
from .llm import (LlmClient, LlmClientConfig, LlmError, LlmNetworkError, LlmTimeoutError,
                  LlmUnparseableError, build_messages, llm_generate_cost)
