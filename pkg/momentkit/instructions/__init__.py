"""
Instruction data generation: the task taxonomy, prompt templates, LLM
clients, and the generator that turns an instance-event matrix into
User/Assistant records.
"""
from .clients import HttpChatClient, LlmClient, MockClient, prompt_hash
from .generate import (InstructionBatch, InstructionRecord,
                       dataset_statistics, generate_instructions,
                       parse_reply, span_text, validate_record)
from .tasks import TaskKind
from .templates import (PLACEHOLDERS, PromptTemplate, fill_prompt,
                        load_template)
