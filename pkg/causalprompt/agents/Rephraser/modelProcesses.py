import re
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from causalprompt.models.Models import ChatRequest, ModelBase
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

FENCE = re.compile(r"```[\w+-]*[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)


def strip_code_fences(text: str) -> str:
    """Body of the first fenced block, or the text itself when there is none."""
    match = FENCE.search(text)
    if match is None:
        return text
    body = match.group(1)
    return body if body.endswith("\n") else body + "\n"


class AbstractModelProcesses(ABC):

    @abstractmethod
    def generate_text(self, prompt: str, system_prompt: str = "", max_tokens: int = 1000,
                      temperature: Optional[float] = None, k: int = 1) -> List[Optional[str]]:
        pass


class RephraserModelProcesses(AbstractModelProcesses):
    LLM: ModelBase

    def __init__(self, llm: ModelBase):
        self.LLM = llm

    def generate_text(self, prompt: str, system_prompt: str = "", max_tokens: int = 1000,
                      temperature: Optional[float] = None, k: int = 1, purpose: str = "chat",
                      request_id: str = "", metadata: Optional[Dict[str, Any]] = None) -> List[Optional[str]]:
        """
        k independent completions of one prompt, in slot order. A slot whose
        response is empty yields None.
        """
        requests = [
            ChatRequest.from_prompt(
                prompt, system_prompt, max_tokens=max_tokens, temperature=temperature, purpose=purpose,
                request_id=f"{request_id}#{slot}" if k > 1 else request_id,
                metadata={**(metadata or {}), "slot": slot},
            )
            for slot in range(k)
        ]
        responses = self.LLM.complete_many(requests)
        return [response.text if response.ok else None for response in responses]
