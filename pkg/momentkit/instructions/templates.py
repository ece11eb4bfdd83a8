"""
Prompt templates for instruction generation.

Template bodies are shipped as text files, one per task.  Placeholders are
single-braced lower-case names such as ``{segment_caption}``; doubled braces
such as ``{{SOURCE_CLIP}}`` are ordinary text.
"""
import re
from dataclasses import dataclass
from importlib import resources

from momentkit.exceptions import TemplateError
from momentkit.instructions.tasks import TaskKind

PLACEHOLDERS = frozenset(['descriptions', 'segment_caption', 'instance_class',
                          'content', 'source_clip_content',
                          'target_clip_content'])

_PLACEHOLDER = re.compile(r'(?<!\{)\{([a-z_]+)\}(?!\})')

# Extra in-context examples go before this paragraph
_CLOSING = 'Now given'


@dataclass(frozen=True)
class PromptTemplate:
    task: TaskKind
    body: str

    def __post_init__(self):
        unknown = self.placeholders - PLACEHOLDERS
        if unknown:
            raise TemplateError(f'Unknown placeholders {sorted(unknown)} in '
                                f'{self.task.value} template', unknown)

    @property
    def placeholders(self):
        return frozenset(_PLACEHOLDER.findall(self.body))


def fill_prompt(template, bindings):
    """
    Substitute bindings into a template in a single pass.

    Bound text is inserted as is, so braces inside it are never expanded.
    Bindings the template does not use are ignored.

    Raises
    ------
    TemplateError
        Listing every placeholder without a binding.

    Examples
    --------
    >>> t = PromptTemplate(TaskKind.SEGMENT_QA, 'Caption: {segment_caption}')
    >>> fill_prompt(t, {'segment_caption': 'a {cat}'})
    'Caption: a {cat}'
    """
    missing = sorted(template.placeholders - set(bindings))
    if missing:
        raise TemplateError(f'No binding for {missing} in '
                            f'{template.task.value} template', missing)
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]),
                            template.body)


def load_template(task, extra_examples=()):
    """
    Load the shipped template for a task.

    Parameters
    ----------
    task : TaskKind or str
    extra_examples : sequence of str, optional
        In-context examples inserted, each followed by a blank line, just
        before the closing "Now given ..." paragraph.

    Returns
    -------
    template : PromptTemplate
    """
    task = TaskKind.parse(task)
    body = (resources.files('momentkit.instructions') / 'templates' /
            f'{task.value}.txt').read_text(encoding='utf-8')
    if body.endswith('\n'):
        body = body[:-1]
    if extra_examples:
        at = body.find('\n' + _CLOSING)
        if at < 0:
            raise TemplateError(f'The {task.value} template has no examples '
                                'section to extend')
        at += 1
        body = (body[:at] +
                ''.join(e.strip('\n') + '\n\n' for e in extra_examples) +
                body[at:])
    return PromptTemplate(task, body)
