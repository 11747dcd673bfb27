from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import ConfigError
from grhrnn.tasks.copy_task import CopyTask
from grhrnn.tasks.mnist import MnistTask
from grhrnn.tasks.ptb import PtbTask
from grhrnn.tasks.task import Task


class TaskFactory(object):

    @classmethod
    def create_task(cls, config: ConfigParams) -> Task:

        if config.task == "copy":
            return CopyTask(config)

        elif config.task == "mnist":
            return MnistTask(config, permute=False)

        elif config.task == "mnist-permuted":
            return MnistTask(config, permute=True)

        elif config.task == "ptb-char":
            return PtbTask(config)

        else:
            raise ConfigError(f"Task {config.task} not supported")
