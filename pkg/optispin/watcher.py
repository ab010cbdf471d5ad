import os
import time
import logging
from typing import Callable

from watchdog.events import FileSystemEventHandler
from watchdog.observers import Observer

from .errors import OptispinError
from .response import ErrorMessage, Message
from .runconfig import load_config
from .runner import run


class ConfigChangeHandler(FileSystemEventHandler):
    """Calls back when the watched configuration file is written."""
    def __init__(self, path, callback: Callable):
        self.path = os.path.abspath(path)
        self.callback = callback

    def _matches(self, event):
        paths = [getattr(event, 'src_path', None), getattr(event, 'dest_path', None)]
        return not event.is_directory and any(p and os.path.abspath(p) == self.path for p in paths)

    def on_modified(self, event):
        if self._matches(event):
            logging.debug('event type: %s path: %s' % (event.event_type, event.src_path))
            self.callback()

    on_created = on_modified
    on_moved = on_modified


class Watcher:
    """
    Re-runs a configuration every time its file changes.

    :param path str: the configuration file
    :param overrides list: 'section.key=value' overrides applied to each run
    :param output_dir str: overrides [output] directory
    :param report callable: receives the Message of every run
    """
    def __init__(self, path, overrides=None, output_dir=None, report=print):
        self.path = path
        self.overrides = overrides
        self.output_dir = output_dir
        self.report = report
        self.is_running = False
        self.runs = 0
        self.observer = Observer()

    def run_once(self):
        """Runs the current file contents, reporting failures instead of raising."""
        action = 'watch'
        try:
            config = load_config(self.path, self.overrides)
            action = config.kind
            result = run(config, self.output_dir)
            message = Message(action, data=result.as_data(), success=result.passed)
        except OptispinError as e:
            logging.error('Run of %s failed: %s' % (self.path, e))
            message = ErrorMessage(action, e)

        self.runs += 1
        self.report(message.to_json())
        return message

    def start(self, poll_interval=1.0):
        """Runs once, then watches the file until close() is called."""
        self.is_running = True
        self.run_once()
        self.observer.schedule(
            event_handler=ConfigChangeHandler(self.path, self.run_once),
            path=os.path.dirname(os.path.abspath(self.path)),
            recursive=False,
        )
        self.observer.start()
        logging.debug('Watching %s' % self.path)

        while self.is_running:
            time.sleep(poll_interval)

    def close(self):
        logging.debug('Stopping watcher')
        self.is_running = False
        if self.observer.is_alive():
            self.observer.stop()
            self.observer.join()
