from grhrnn.common.config import ConfigParams
from grhrnn.hierarchy.hrnn import HierarchicalRnn
from grhrnn.tasks.task import Task


class ModelFactory(object):

    @classmethod
    def create_model(cls, config: ConfigParams, task: Task) -> HierarchicalRnn:

        model = HierarchicalRnn(input_size=task.input_size, level_sizes=config.level_sizes,
                                num_classes=task.num_classes, k_max=task.k_max(),
                                decoder_units=config.decoder_units, dtype=config.torch_dtype)
        model.init_parameters(config.seed_init)
        return model
