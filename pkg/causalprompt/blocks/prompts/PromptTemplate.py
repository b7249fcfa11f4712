from abc import ABC, abstractmethod
from typing import Dict, Sequence

from causalprompt.blocks.prompts.Intentions import DEFAULT_REGISTRY, Intention, IntentionVector, check_length


class PromptBase(ABC):

    @abstractmethod
    def __init__(self):
        pass

    @abstractmethod
    def format_messages(self):
        pass


META_PROMPT = """Rephrase the following programming question{instructions}.{role}{scenario}
Keep every requirement, constraint, input format, output format and example unchanged.
Reply with the rephrased question only.

Question:
{question}"""

CODE_PROMPT = """Write a complete Python 3 program that solves the programming question below.
The program reads from standard input and writes to standard output.
Reply with the code only.

Question:
{question}"""


class PromptTemplate(PromptBase):
    # The template to use
    template: str
    # extra input variables and their values, merged into every fill
    input_variables: Dict[str, str]

    def __init__(self, template: str, input_variables: Dict[str, str] = None):
        self.template = template
        self.input_variables = dict(input_variables or {})

    def format_messages(self, *args, **kwargs) -> str:
        for key in self.input_variables.keys():
            kwargs.setdefault(key, self.input_variables[key])
        return self.template.format(**kwargs)

    def __str__(self):
        return self.template


class MetaPromptTemplate(PromptTemplate):
    """
    The rephrasing meta-prompt: a question slot plus the clauses of the selected
    intentions, grouped as instruction, role, scenario (in that order).
    An all-zero selection produces the bare rephrase request (the control group).
    """
    registry: Sequence[Intention]

    def __init__(self, registry: Sequence[Intention] = DEFAULT_REGISTRY, template: str = META_PROMPT):
        super().__init__(template)
        self.registry = tuple(registry)

    def clauses(self, selection: IntentionVector) -> Dict[str, str]:
        selected = selection.selected(self.registry)
        by_group = {group: [i.surface_text for i in selected if i.group == group]
                    for group in ("instruction", "role", "scenario")}
        instructions = ""
        if by_group["instruction"]:
            instructions = " and " + ", ".join(by_group["instruction"])
        role = ""
        if by_group["role"]:
            role = " Rephrase it " + " and ".join(by_group["role"]) + "."
        scenario = ""
        if by_group["scenario"]:
            scenario = " Assume the question is asked " + " and ".join(by_group["scenario"]) + "."
        return {"instructions": instructions, "role": role, "scenario": scenario}

    def format_messages(self, question: str, selection: IntentionVector) -> str:
        check_length(selection, self.registry)
        return super().format_messages(question=question, **self.clauses(selection))


def build_meta_prompt(question: str, selection: IntentionVector, registry: Sequence[Intention] = DEFAULT_REGISTRY) -> str:
    return MetaPromptTemplate(registry).format_messages(question=question, selection=selection)


def build_code_prompt(question: str) -> str:
    return PromptTemplate(CODE_PROMPT).format_messages(question=question)
