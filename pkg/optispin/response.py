import json
import logging


class Message:
    """
    Defines the structure of a run summary or error record.

    :param action str: the experiment or command that was run
    :param data any: the additional data to send along with the message
    :param success bool: if the action was successful
    :param message str: the error message if success is False
    """
    def __init__(self, action, data=None, success=True, message=None):
        self.action = action
        self.success = success
        self.data = data
        self.message = message

    def getMessage(self):
        """Creates the response message."""
        message = {
            'action': self.action,
            'success': self.success
        }

        if self.data is not None:
            message['data'] = self.data

        if self.message is not None:
            if self.success is True:
                message['message'] = self.message
            else:
                message['error'] = self.message

        logging.debug('Created message: %s' % message)
        return message

    def to_json(self):
        """
        Serializes the message with sorted keys.

        :return: the JSON document
        :rType: str
        """
        return json.dumps(self.getMessage(), sort_keys=True, indent=2)


class ErrorMessage(Message):
    """
    A failed action, carrying the exception type and any location details.

    :param action str: the action that failed
    :param error Exception: the exception raised by the library
    """
    def __init__(self, action, error):
        details = {'type': type(error).__name__}
        for attribute in ('section', 'key', 'line', 'index', 'min_eigenvalue', 'error_type'):
            value = getattr(error, attribute, None)
            if value is not None:
                details[attribute] = value

        Message.__init__(self, action, data=details, success=False, message=str(error))
