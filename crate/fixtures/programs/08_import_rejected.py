# scene: study_room.json
import os
