"""
Clients for the text LLM that writes instruction data.
"""
import hashlib
import json
import logging
import os
import time
import urllib.error
import urllib.request
from abc import ABC, abstractmethod

from momentkit.exceptions import ClientError, InputError

logger = logging.getLogger(__name__)


def prompt_hash(prompt):
    """SHA-256 hex digest of a prompt's UTF-8 bytes."""
    return hashlib.sha256(prompt.encode('utf-8')).hexdigest()


class LlmClient(ABC):
    """Anything that turns a prompt into a reply."""

    @abstractmethod
    def complete(self, prompt):
        """Return the model's reply to `prompt`."""

    def _check_prompt(self, prompt):
        if not prompt:
            raise InputError('Prompt is empty')


class MockClient(LlmClient):
    """
    Deterministic client returning canned replies.

    Replies are looked up by the SHA-256 of the prompt, then by `rules`,
    ``(text, reply)`` pairs tried in order that match any prompt containing
    `text`.  Other prompts go to `fallback` if given, and otherwise get a
    fixed reply naming the prompt hash.

    Examples
    --------
    >>> client = MockClient(rules=[('dog', 'Assistant: A dog.')])
    >>> client.register('hi', 'hello')
    >>> client.complete('hi')
    'hello'
    >>> client.complete('What is the dog doing?')
    'Assistant: A dog.'
    >>> client.complete('bye')[:13]
    'Assistant: [m'
    """

    def __init__(self, replies=None, fallback=None, rules=()):
        self.replies = dict(replies or {})
        self.fallback = fallback
        self.rules = list(rules)

    def register(self, prompt, reply):
        self.replies[prompt_hash(prompt)] = reply

    def complete(self, prompt):
        self._check_prompt(prompt)
        digest = prompt_hash(prompt)
        if digest in self.replies:
            return self.replies[digest]
        for text, reply in self.rules:
            if text in prompt:
                return reply
        if self.fallback is not None:
            return self.fallback(prompt)
        return f'Assistant: [mock reply {digest[:16]}]'


class HttpChatClient(LlmClient):
    """
    Client for an HTTP JSON chat-completions endpoint.

    Sends ``{"model", "messages": [{"role": "user", "content": prompt}]}``
    and returns ``choices[0].message.content`` from the reply, or the raw
    body if the reply has no such field.  The bearer token is read from the
    environment variable named by `token_env` at call time.

    Failed calls (transport errors, non-2xx statuses, timeouts) are retried
    `retries` times, waiting ``backoff * 2**attempt`` seconds in between.
    """

    def __init__(self, endpoint, model, token_env='MOMENT_LLM_TOKEN',
                 retries=3, timeout=60.0, backoff=0.5, sleep=time.sleep):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self._sleep = sleep

    @classmethod
    def from_settings(cls, settings):
        return cls(settings.endpoint, settings.model, settings.token_env,
                   settings.retries, settings.timeout, settings.backoff)

    def _request(self, prompt):
        payload = {'model': self.model,
                   'messages': [{'role': 'user', 'content': prompt}],
                   'temperature': 0}
        headers = {'Content-Type': 'application/json'}
        token = os.environ.get(self.token_env) if self.token_env else None
        if token:
            headers['Authorization'] = f'Bearer {token}'
        return urllib.request.Request(self.endpoint,
                                      data=json.dumps(payload).encode(),
                                      headers=headers, method='POST')

    @staticmethod
    def _reply_text(body):
        try:
            return json.loads(body)['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError):
            return body

    def complete(self, prompt):
        self._check_prompt(prompt)
        request = self._request(prompt)
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning('LLM call failed (%s); retry %d of %d in '
                               '%.2fs', last_error, attempt, self.retries,
                               delay)
                self._sleep(delay)
            try:
                with urllib.request.urlopen(request,
                                            timeout=self.timeout) as response:
                    body = response.read().decode('utf-8')
                return self._reply_text(body)
            except urllib.error.HTTPError as e:
                last_error = f'HTTP {e.code}'
            except (urllib.error.URLError, TimeoutError, OSError) as e:
                last_error = str(e)
        raise ClientError(f'LLM call to {self.endpoint} failed after '
                          f'{self.retries} retries: {last_error}',
                          self.retries)
